use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::algebra::{bind, bundle_with_tiebreak, sign_dot, Hypervector};
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng};

pub const DEFAULT_ELL: usize = 64;
pub const DEFAULT_R: usize = 8192;
const MAX_REDRAWS: u32 = 32;

/// What a registered name stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Role,
    Filler,
    Entity,
    Core,
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    kind: ConceptKind,
    hv: Hypervector,
    salt: u32,
    source: Option<DVector<f64>>,
}

/// Named random signatures with deterministic slot permutations.
///
/// Every signature is derived from `(seed, name, salt)`; the salt is bumped
/// until the new random block is within `5/√R` of orthogonal to every
/// stored one. Registration is append-only.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptDictionary {
    seed: u64,
    ell: usize,
    r: usize,
    order: Vec<String>,
    entries: BTreeMap<String, Entry>,
    tiebreak: Vec<i8>,
}

fn signs(seed: u64, r: usize) -> Vec<i8> {
    let mut g = rng(seed);
    (0..r).map(|_| if g.random::<bool>() { 1 } else { -1 }).collect()
}

impl ConceptDictionary {
    pub fn new(seed: u64, ell: usize, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::Config("random block length must be positive".into()));
        }
        Ok(Self {
            seed,
            ell,
            r,
            order: Vec::new(),
            entries: BTreeMap::new(),
            tiebreak: signs(derive_seed(seed, "tiebreak"), r),
        })
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self::new(seed, DEFAULT_ELL, DEFAULT_R).expect("valid defaults")
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn tiebreak(&self) -> &[i8] {
        &self.tiebreak
    }

    pub fn orthogonality_bound(&self) -> f64 {
        5.0 / (self.r as f64).sqrt()
    }

    /// Names in registration order.
    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&Hypervector> {
        self.entries.get(name).map(|e| &e.hv).ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn kind(&self, name: &str) -> Result<ConceptKind> {
        self.entries.get(name).map(|e| e.kind).ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    /// Salt used for `name`'s signature (0 unless a redraw was needed).
    pub fn salt(&self, name: &str) -> Result<u32> {
        self.entries.get(name).map(|e| e.salt).ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    fn draw_signature(&self, name: &str) -> Result<(Vec<i8>, u32)> {
        let bound = self.orthogonality_bound();
        for salt in 0..MAX_REDRAWS {
            let rb = signs(derive_seed(self.seed, &format!("signature:{name}:{salt}")), self.r);
            let ok = self
                .entries
                .values()
                .all(|e| (sign_dot(&rb, e.hv.random_block()) as f64 / self.r as f64).abs() < bound);
            if ok {
                return Ok((rb, salt));
            }
        }
        Err(Error::InvalidDomain(format!("could not draw a near-orthogonal signature for {name}")))
    }

    /// Registers (or returns the existing) pure-signature concept with a zero
    /// kPCA block.
    pub fn register(&mut self, name: &str, kind: ConceptKind) -> Result<Hypervector> {
        if let Some(e) = self.entries.get(name) {
            if e.kind != kind {
                return Err(Error::Duplicate(name.to_string()));
            }
            return Ok(e.hv.clone());
        }
        let (rb, salt) = self.draw_signature(name)?;
        let hv = Hypervector::new(DVector::zeros(self.ell), rb)?;
        self.insert(name, Entry { kind, hv: hv.clone(), salt, source: None });
        Ok(hv)
    }

    fn insert(&mut self, name: &str, entry: Entry) {
        self.order.push(name.to_string());
        self.entries.insert(name.to_string(), entry);
    }

    /// Row-orthonormal `k × ℓ` map fixed by `(seed, k)`; `emb(u) = Qᵀ u`
    /// preserves inner products.
    pub fn extension_map(&self, k: usize) -> Result<DMatrix<f64>> {
        if k > self.ell {
            return Err(Error::Config(format!("kPCA width {k} exceeds ℓ = {}", self.ell)));
        }
        let mut g = rng(derive_seed(self.seed, &format!("extension:{k}")));
        let m = DMatrix::from_fn(self.ell, k, |_, _| {
            let x: f64 = StandardNormal.sample(&mut g);
            x
        });
        let q = m.qr().q();
        Ok(q.transpose())
    }

    /// Builds `[scaled embedding of u | named random signature]`.
    ///
    /// With `ell = k` the kPCA block is `u` itself; with `ell > k` it is
    /// `Qᵀ u` for the dictionary's orthonormal extension. Re-registering a
    /// name with the same `u` returns the stored hypervector.
    pub fn build_two_block(&mut self, u: &DVector<f64>, name: &str, ell: usize) -> Result<Hypervector> {
        if ell != self.ell {
            return Err(Error::Config(format!("dictionary ℓ is {}, requested {ell}", self.ell)));
        }
        if u.len() > ell {
            return Err(Error::Config(format!("ℓ = {ell} is smaller than the kPCA width {}", u.len())));
        }
        if let Some(e) = self.entries.get(name) {
            return match &e.source {
                Some(s) if s == u => Ok(e.hv.clone()),
                _ => Err(Error::Duplicate(name.to_string())),
            };
        }
        let kpca = if u.len() == ell { u.clone() } else { self.extension_map(u.len())?.transpose() * u };
        let (rb, salt) = self.draw_signature(name)?;
        let hv = Hypervector::new(kpca, rb)?;
        self.insert(name, Entry { kind: ConceptKind::Entity, hv: hv.clone(), salt, source: Some(u.clone()) });
        Ok(hv)
    }

    /// Bundle using this dictionary's tiebreak vector.
    pub fn bundle(&self, items: &[&Hypervector], weights: Option<&[f64]>) -> Result<Hypervector> {
        bundle_with_tiebreak(items, weights, &self.tiebreak)
    }

    /// Bundle of registered names.
    pub fn bundle_names(&self, names: &[&str]) -> Result<Hypervector> {
        let hvs = names.iter().map(|n| self.get(n)).collect::<Result<Vec<_>>>()?;
        self.bundle(&hvs, None)
    }

    /// Permutation table `σ` for `slot`, fixed by `(seed, slot)`.
    pub fn permutation_table(&self, slot: u64) -> Vec<usize> {
        let mut t: Vec<usize> = (0..self.r).collect();
        t.shuffle(&mut rng(derive_seed(self.seed, &format!("permutation:{slot}"))));
        t
    }

    pub fn inverse_table(&self, slot: u64) -> Vec<usize> {
        let t = self.permutation_table(slot);
        let mut inv = vec![0; t.len()];
        for (i, &s) in t.iter().enumerate() {
            inv[s] = i;
        }
        inv
    }

    /// `π(x)_i = x_{σ(i)}` on the random block; the kPCA block is untouched.
    pub fn permute(&self, h: &Hypervector, slot: u64) -> Result<Hypervector> {
        self.apply_table(h, &self.permutation_table(slot))
    }

    pub fn inverse_permute(&self, h: &Hypervector, slot: u64) -> Result<Hypervector> {
        self.apply_table(h, &self.inverse_table(slot))
    }

    fn apply_table(&self, h: &Hypervector, t: &[usize]) -> Result<Hypervector> {
        if h.r() != self.r {
            return Err(Error::Dimension(format!("random block {} vs dictionary R = {}", h.r(), self.r)));
        }
        let rb = h.random_block();
        Ok(h.with_random(t.iter().map(|&s| rb[s]).collect()))
    }

    /// `bundle_i bind(entity, bind(role_i, value_i))`.
    pub fn encode_fact(&self, entity: &str, pairs: &[(&str, &str)]) -> Result<Hypervector> {
        if pairs.is_empty() {
            return Err(Error::Empty(format!("fact about {entity} has no role/value pairs")));
        }
        let e = self.get(entity)?;
        let bound = pairs
            .iter()
            .map(|(role, value)| bind(e, &bind(self.get(role)?, self.get(value)?)?))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Hypervector> = bound.iter().collect();
        self.bundle(&refs, None)
    }

    /// Writes `dictionary.json` (header) and `dictionary.bin` (per entry in
    /// registration order: ℓ little-endian f64 values, then R sign bytes).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = DictHeader {
            format: DICT_FORMAT.into(),
            seed: self.seed,
            ell: self.ell,
            r: self.r,
            entries: self
                .order
                .iter()
                .map(|n| {
                    let e = &self.entries[n];
                    HeaderEntry {
                        name: n.clone(),
                        kind: e.kind,
                        salt: e.salt,
                        source: e.source.as_ref().map(|s| s.as_slice().to_vec()),
                    }
                })
                .collect(),
        };
        std::fs::write(dir.join("dictionary.json"), serde_json::to_vec_pretty(&header)?)?;
        let mut bytes = Vec::with_capacity(self.order.len() * (self.ell * 8 + self.r));
        for n in &self.order {
            let hv = &self.entries[n].hv;
            for x in hv.kpca_block().iter() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            bytes.extend(hv.random_block().iter().map(|s| *s as u8));
        }
        std::fs::write(dir.join("dictionary.bin"), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: DictHeader = serde_json::from_slice(&std::fs::read(dir.join("dictionary.json"))?)?;
        if header.format != DICT_FORMAT {
            return Err(Error::Format(format!("unknown dictionary format {:?}", header.format)));
        }
        let bytes = std::fs::read(dir.join("dictionary.bin"))?;
        let stride = header.ell * 8 + header.r;
        if bytes.len() != stride * header.entries.len() {
            return Err(Error::Format("dictionary.bin size does not match header".into()));
        }
        let mut dict = Self::new(header.seed, header.ell, header.r)?;
        for (k, he) in header.entries.into_iter().enumerate() {
            let chunk = &bytes[k * stride..(k + 1) * stride];
            let kpca = DVector::from_iterator(
                header.ell,
                chunk[..header.ell * 8].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))),
            );
            let rb: Vec<i8> = chunk[header.ell * 8..].iter().map(|b| *b as i8).collect();
            let hv = Hypervector::new(kpca, rb)?;
            dict.insert(&he.name, Entry { kind: he.kind, hv, salt: he.salt, source: he.source.map(DVector::from_vec) });
        }
        Ok(dict)
    }
}

const DICT_FORMAT: &str = "actpc-hvdict-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictHeader {
    format: String,
    seed: u64,
    ell: usize,
    r: usize,
    entries: Vec<HeaderEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    name: String,
    kind: ConceptKind,
    salt: u32,
    source: Option<Vec<f64>>,
}
