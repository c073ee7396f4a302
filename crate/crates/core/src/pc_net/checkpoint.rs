use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Activation, PCConfig, PCNetwork, UpdateOrder};
use crate::error::{Error, Result};

const FORMAT: &str = "actpc-pcnet-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    dims: Vec<usize>,
    activations: Vec<Activation>,
    seed: u64,
    eta_z: f64,
    eta_w: f64,
    use_bias: bool,
    update_order: UpdateOrder,
    prior: Vec<f64>,
    value_count: usize,
}

impl PCNetwork {
    /// Writes a one-line JSON header followed by little-endian `f64` values:
    /// weights (row-major, bottom layer first), then biases, then states.
    pub fn save_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let values = self.flat_values();
        let header = Header {
            format: FORMAT.into(),
            dims: self.layers.iter().map(|l| l.dim).collect(),
            activations: self.layers[..self.layers.len() - 1].iter().map(|l| l.activation).collect(),
            seed: self.seed,
            eta_z: self.eta_z,
            eta_w: self.eta_w,
            use_bias: self.use_bias,
            update_order: self.update_order,
            prior: self.prior.as_slice().to_vec(),
            value_count: values.len(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        if header.format != FORMAT {
            return Err(Error::Format(format!("unknown checkpoint format {:?}", header.format)));
        }
        let mut cfg = PCConfig::new(header.dims.clone(), Activation::Identity, header.eta_z, header.eta_w, header.seed);
        cfg.layer_activations = Some(header.activations);
        cfg.use_bias = header.use_bias;
        cfg.update_order = header.update_order;
        cfg.top_prior = Some(header.prior);
        let mut net = PCNetwork::new(&cfg)?;
        let expected = net.flat_values().len();
        if header.value_count != expected {
            return Err(Error::Format(format!("header declares {} values, architecture needs {expected}", header.value_count)));
        }
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != expected * 8 {
            return Err(Error::Format(format!("payload has {} bytes, expected {}", bytes.len(), expected * 8)));
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        net.set_flat_values(&values);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("checkpoint contains non-finite values".into()));
        }
        Ok(net)
    }

    pub fn save_checkpoint_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.save_checkpoint(std::io::BufWriter::new(f))
    }

    pub fn load_checkpoint_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_checkpoint(std::fs::File::open(path)?)
    }

    fn flat_values(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for w in &self.weights {
            for i in 0..w.nrows() {
                v.extend((0..w.ncols()).map(|j| w[(i, j)]));
            }
        }
        for b in &self.biases {
            v.extend(b.iter());
        }
        for s in &self.states {
            v.extend(s.iter());
        }
        v
    }

    fn set_flat_values(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for w in &mut self.weights {
            let (r, c) = w.shape();
            *w = DMatrix::from_row_iterator(r, c, it.by_ref().take(r * c));
        }
        for b in &mut self.biases {
            let n = b.len();
            *b = DVector::from_iterator(n, it.by_ref().take(n));
        }
        for s in &mut self.states {
            let n = s.len();
            *s = DVector::from_iterator(n, it.by_ref().take(n));
        }
    }
}
