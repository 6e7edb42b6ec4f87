use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use super::tensor::Tensor;
use super::NetError;

const MAGIC: &[u8; 8] = b"RILOCKPT";
const FORMAT_VERSION: u32 = 1;

/// Which network a parameter set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Policy,
    Discriminator,
}

impl Role {
    fn tag(self) -> u32 {
        match self {
            Role::Policy => 0,
            Role::Discriminator => 1,
        }
    }

    fn from_tag(tag: u32) -> Result<Self, NetError> {
        match tag {
            0 => Ok(Role::Policy),
            1 => Ok(Role::Discriminator),
            t => Err(NetError::Checkpoint(format!("unknown role tag {t}"))),
        }
    }
}

/// How a freshly registered parameter is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform in `±scale·sqrt(6 / fan_in)`.
    HeUniform {
        fan_in: usize,
        scale: f64,
    },
}

/// Ordered, named parameter tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    role: Role,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(role: Role) -> Self {
        ParamSet {
            role,
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Registers a parameter and returns its slot index.
    ///
    /// # Panics
    /// On a duplicate name.
    pub fn add<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut R) -> usize {
        assert!(self.index_of(name).is_none(), "duplicate parameter name `{name}`");
        let mut t = Tensor::zeros(shape);
        if let Init::HeUniform { fan_in, scale } = init {
            let bound = scale * (6.0 / fan_in.max(1) as f64).sqrt();
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
        }
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// A set with the same names and shapes, all zeros. Used for gradients.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            role: self.role,
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    /// Replaces all values from `other`, which must share the layout.
    pub fn copy_from(&mut self, other: &ParamSet) -> Result<(), NetError> {
        if !self.same_layout(other) {
            return Err(NetError::Shape("parameter layouts differ".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data_mut().copy_from_slice(b.data());
        }
        Ok(())
    }

    /// Flat view over every scalar, in registration order.
    pub fn flat_get(&self, mut i: usize) -> f64 {
        for t in &self.tensors {
            if i < t.len() {
                return t.data()[i];
            }
            i -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_set(&mut self, mut i: usize, v: f64) {
        for t in &mut self.tensors {
            if i < t.len() {
                t.data_mut()[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Serializes to the checkpoint byte layout:
    ///
    /// ```text
    /// "RILOCKPT" | u32 version | u32 role | u32 count
    /// per parameter: u32 name_len | name (utf-8) | u32 ndim | u64 dims.. | f64 values..
    /// ```
    ///
    /// All integers and floats little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.scalar_count() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.role.tag().to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(NetError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NetError::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let role = Role::from_tag(r.u32()?)?;
        let count = r.u32()? as usize;
        let mut set = ParamSet::new(role);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| NetError::Checkpoint("parameter name is not utf-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            if set.index_of(&name).is_some() {
                return Err(NetError::Checkpoint(format!("duplicate parameter `{name}`")));
            }
            set.names.push(name);
            set.tensors.push(Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(NetError::Checkpoint("trailing bytes".into()));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        if self.pos + n > self.bytes.len() {
            return Err(NetError::Checkpoint(format!(
                "truncated checkpoint at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
