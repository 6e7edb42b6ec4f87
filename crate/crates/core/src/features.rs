//! Turns [`Observation`]s into network input rows.

use serde::{Deserialize, Serialize};

use crate::gridworld::{Observation, CODE_AGENT, CODE_GOAL, CODE_TRAP};
use crate::numnet::InputShape;

/// How the coded view matrix is presented to an encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    /// One channel holding the raw cell codes.
    Codes,
    /// One-hot trap / agent / goal channels.
    Planes,
    /// Trap and goal channels of a window re-centred on the agent. For full
    /// maps the window has side `2·side − 1`, so the whole map stays visible
    /// from any cell; cells beyond the map read as traps.
    Egocentric,
}

/// Builds input rows of a fixed [`InputShape`] from observation histories.
///
/// Rows hold the channels-last view of every stacked frame, then the position
/// features of every frame, then the self-exploration bit if enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCoder {
    pub coding: Coding,
    pub view_side: usize,
    /// Side of the underlying map, needed to locate the agent for re-centring.
    pub map_side: usize,
    pub frames: usize,
    pub with_tau: bool,
}

impl FeatureCoder {
    fn window(&self) -> usize {
        match self.coding {
            Coding::Egocentric if self.view_side == self.map_side => 2 * self.map_side - 1,
            _ => self.view_side,
        }
    }

    fn channels(&self) -> usize {
        match self.coding {
            Coding::Codes => 1,
            Coding::Planes => 3,
            Coding::Egocentric => 2,
        }
    }

    pub fn input_shape(&self) -> InputShape {
        let w = self.window();
        InputShape {
            height: w,
            width: w,
            channels: self.channels() * self.frames,
            extra: 2 * self.frames + usize::from(self.with_tau),
        }
    }

    pub fn width(&self) -> usize {
        self.input_shape().width()
    }

    /// Encodes the newest `frames` observations of `history` (oldest first).
    /// Missing frames at the start of an episode repeat the oldest one.
    pub fn encode(&self, history: &[&Observation]) -> Vec<f64> {
        assert!(!history.is_empty(), "empty observation history");
        let shape = self.input_shape();
        let mut row = vec![0.0; shape.width()];
        let frames: Vec<&Observation> = (0..self.frames)
            .map(|f| {
                let back = self.frames - 1 - f;
                let idx = history.len().saturating_sub(1 + back);
                history[idx]
            })
            .collect();
        let stride = self.channels() * self.frames;
        let w = self.window();
        for (f, obs) in frames.iter().enumerate() {
            let base = f * self.channels();
            self.write_view(obs, |pixel, ch, v| row[pixel * stride + base + ch] = v, w);
        }
        let extra = shape.view_len();
        for (f, obs) in frames.iter().enumerate() {
            row[extra + 2 * f] = obs.pos.0;
            row[extra + 2 * f + 1] = obs.pos.1;
        }
        if self.with_tau {
            row[extra + 2 * self.frames] = f64::from(history.last().unwrap().tau_bit);
        }
        row
    }

    /// The all-zeros input row, used for the empty second slot of
    /// single-state discrimination.
    pub fn zero_row(&self) -> Vec<f64> {
        vec![0.0; self.width()]
    }

    fn write_view(&self, obs: &Observation, mut put: impl FnMut(usize, usize, f64), w: usize) {
        let vs = obs.view_side;
        match self.coding {
            Coding::Codes => {
                for (i, &c) in obs.view.iter().enumerate() {
                    put(i, 0, f64::from(c));
                }
            }
            Coding::Planes => {
                for (i, &c) in obs.view.iter().enumerate() {
                    match c {
                        CODE_TRAP => put(i, 0, 1.0),
                        CODE_AGENT => put(i, 1, 1.0),
                        CODE_GOAL => put(i, 2, 1.0),
                        _ => {}
                    }
                }
            }
            Coding::Egocentric => {
                let Some((ar, ac)) = self.agent_in_view(obs) else {
                    return;
                };
                let half = (w / 2) as i64;
                for r in 0..w as i64 {
                    for c in 0..w as i64 {
                        let (vr, vc) = (ar + r - half, ac + c - half);
                        let code = if vr < 0 || vc < 0 || vr >= vs as i64 || vc >= vs as i64 {
                            CODE_TRAP
                        } else {
                            obs.view[vr as usize * vs + vc as usize]
                        };
                        let pixel = (r * w as i64 + c) as usize;
                        match code {
                            CODE_TRAP => put(pixel, 0, 1.0),
                            CODE_GOAL => put(pixel, 1, 1.0),
                            _ => {}
                        }
                    }
                }
            }
        }
    }

    fn agent_in_view(&self, obs: &Observation) -> Option<(i64, i64)> {
        let vs = obs.view_side;
        if vs != self.map_side {
            // partial windows are already centred on the agent
            return Some(((vs / 2) as i64, (vs / 2) as i64));
        }
        let denom = (self.map_side + 1) as f64;
        let col = (obs.pos.0 * denom).round() as i64 - 1;
        let row = (obs.pos.1 * denom).round() as i64 - 1;
        if row < 0 || col < 0 || row >= vs as i64 || col >= vs as i64 {
            return None;
        }
        Some((row, col))
    }
}
