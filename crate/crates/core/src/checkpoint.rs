//! Checkpoint container: named little-endian `f64` arrays plus a JSON manifest.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"SLSACKPT"
//! 8       4     format version (u32, currently 1)
//! 12      8     manifest length M in bytes (u64)
//! 20      M     manifest, UTF-8 JSON: {"arrays":[{"name","shape","offset","len"}]}
//! 20+M    ...   data section: concatenated f64 values
//! ```
//!
//! `offset` is the byte offset of the array inside the data section and
//! `len` its element count (the product of `shape`). Arrays are stored in
//! row-major order. Scalars of any [`Scalar`] type are widened to `f64`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, Mlp};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"SLSACKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    arrays: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn arrays(&self) -> &[NamedArray] {
        &self.arrays
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Checkpoint(format!(
                "array {name}: shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        if self.get(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate array name {name}")));
        }
        self.arrays.push(NamedArray { name, shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    fn require(&self, name: &str) -> Result<&NamedArray> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let mut offset = 0u64;
        self.arrays
            .iter()
            .map(|a| {
                let e = ManifestEntry {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    offset,
                    len: a.data.len() as u64,
                };
                offset += 8 * a.data.len() as u64;
                e
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let manifest = serde_json::to_vec(&Manifest {
            arrays: self.manifest(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        for a in &self.arrays {
            for v in &a.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let mlen = u64::from_le_bytes(u64buf) as usize;
        let mut mbytes = vec![0u8; mlen];
        r.read_exact(&mut mbytes)?;
        let manifest: Manifest = serde_json::from_slice(&mbytes)?;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;

        let mut ckpt = Checkpoint::new();
        for e in manifest.arrays {
            let start = e.offset as usize;
            let end = start + 8 * e.len as usize;
            if end > data.len() {
                return Err(Error::Checkpoint(format!("array {} overruns data section", e.name)));
            }
            let values = data[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            ckpt.insert(e.name, e.shape, values)?;
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }

    /// Stores every layer of `net` as `{prefix}.layer{i}.weight` / `.bias`.
    pub fn put_mlp<S: Scalar>(&mut self, prefix: &str, net: &Mlp<S>) -> Result<()> {
        for (i, layer) in net.layers().iter().enumerate() {
            let w = layer.weight();
            self.insert(
                format!("{prefix}.layer{i}.weight"),
                vec![w.nrows(), w.ncols()],
                w.iter().map(|v| v.as_f64()).collect(),
            )?;
            self.insert(
                format!("{prefix}.layer{i}.bias"),
                vec![layer.bias().len()],
                layer.bias().iter().map(|v| v.as_f64()).collect(),
            )?;
        }
        Ok(())
    }

    /// Rebuilds a network stored by [`Checkpoint::put_mlp`]; activations come
    /// from the architecture template `like`.
    pub fn get_mlp<S: Scalar>(&self, prefix: &str, like: &Mlp<S>) -> Result<Mlp<S>> {
        let mut layers = Vec::new();
        for (i, tmpl) in like.layers().iter().enumerate() {
            let w = self.require(&format!("{prefix}.layer{i}.weight"))?;
            let b = self.require(&format!("{prefix}.layer{i}.bias"))?;
            let expected = vec![tmpl.out_dim(), tmpl.in_dim()];
            if w.shape != expected || b.shape != vec![tmpl.out_dim()] {
                return Err(Error::Checkpoint(format!(
                    "{prefix}.layer{i}: stored shape {:?} does not match {expected:?}",
                    w.shape
                )));
            }
            let weight = Array2::from_shape_vec(
                (w.shape[0], w.shape[1]),
                w.data.iter().map(|&v| S::lit(v)).collect(),
            )
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let bias = Array1::from_iter(b.data.iter().map(|&v| S::lit(v)));
            layers.push(Layer::new(weight, bias, tmpl.activation())?);
        }
        Mlp::from_layers(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{flatten, Activation};
    use rand::SeedableRng;

    #[test]
    fn mlp_survives_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::<f64>::new(&[3, 7, 2], Activation::Relu, Activation::Identity, &mut rng)
            .unwrap();
        let mut ck = Checkpoint::new();
        ck.put_mlp("policy", &net).unwrap();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], MAGIC);

        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        let restored = back.get_mlp("policy", &net).unwrap();
        assert_eq!(flatten(&restored), flatten(&net));
    }

    #[test]
    fn manifest_offsets_are_cumulative() {
        let mut ck = Checkpoint::new();
        ck.insert("a", vec![2, 2], vec![1.0; 4]).unwrap();
        ck.insert("b", vec![3], vec![2.0; 3]).unwrap();
        let m = ck.manifest();
        assert_eq!(m[0].offset, 0);
        assert_eq!(m[1].offset, 32);
        assert!(ck.insert("c", vec![2], vec![1.0]).is_err());
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(Checkpoint::read_from(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
    }
}
