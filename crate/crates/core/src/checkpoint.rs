//! Single-file checkpoint archive.
//!
//! Layout: `VARNETCK` magic, `u32` format version, `u64` manifest length, the
//! JSON manifest, every array as little-endian `f64` in manifest order, and a
//! SHA-256 digest of all preceding bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attributes::AttributeSpec;
use crate::error::{Result, VarNetError};
use crate::model::{ModelConfig, VarNet};
use crate::params::{Adam, AdamConfig, ParamStore};
use crate::tensor::Tensor;
use crate::training::{HyperParams, Linkage, TrainState};

pub const MAGIC: &[u8; 8] = b"VARNETCK";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: Vec<u8>,
    stream: u64,
    word_pos: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptState {
    config: AdamConfig,
    steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    model: ModelConfig,
    spec: AttributeSpec,
    hyper: HyperParams,
    step: u64,
    seed: u64,
    rng: RngState,
    disc_optimizer: OptState,
    encdec_optimizer: OptState,
    dataset: Option<String>,
    linkage: Option<Linkage>,
    arrays: Vec<ArrayEntry>,
}

/// A training state plus the run context it came from.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub state: TrainState,
    pub hyper: HyperParams,
    pub dataset: Option<String>,
    pub linkage: Option<Linkage>,
}

impl Checkpoint {
    pub fn new(state: TrainState, hyper: HyperParams) -> Self {
        Self {
            state,
            hyper,
            dataset: None,
            linkage: None,
        }
    }

    pub fn model(&self) -> &VarNet {
        &self.state.model
    }
}

/// Hex SHA-256 over every parameter's name and value bytes.
pub fn fingerprint(store: &ParamStore) -> String {
    let mut h = Sha256::new();
    for e in store.entries() {
        h.update(e.name.as_bytes());
        h.update([0]);
        for v in e.value.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn arrays_of(ck: &Checkpoint) -> Vec<(String, &Tensor)> {
    let s = &ck.state;
    let store = &s.model.store;
    let mut out: Vec<(String, &Tensor)> = store
        .entries()
        .iter()
        .map(|e| (format!("param/{}", e.name), &e.value))
        .collect();
    for (i, t) in s.model.reference.iter().enumerate() {
        out.push((format!("reference/{i}"), t));
    }
    for (tag, opt) in [("disc", &s.opt_disc), ("encdec", &s.opt_encdec)] {
        for (slot, id) in opt.params.iter().enumerate() {
            let name = &store.entry(*id).name;
            out.push((format!("adam/{tag}/m/{name}"), &opt.first[slot]));
            out.push((format!("adam/{tag}/v/{name}"), &opt.second[slot]));
        }
    }
    out
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let s = &ck.state;
    let arrays = arrays_of(ck);
    let manifest = Manifest {
        model: s.model.config.clone(),
        spec: s.model.spec().clone(),
        hyper: ck.hyper.clone(),
        step: s.step,
        seed: s.seed,
        rng: RngState {
            seed: s.rng.get_seed().to_vec(),
            stream: s.rng.get_stream(),
            word_pos: s.rng.get_word_pos().to_string(),
        },
        disc_optimizer: OptState {
            config: s.opt_disc.config,
            steps: s.opt_disc.steps,
        },
        encdec_optimizer: OptState {
            config: s.opt_encdec.config,
            steps: s.opt_encdec.steps,
        },
        dataset: ck.dataset.clone(),
        linkage: ck.linkage.clone(),
        arrays: arrays
            .iter()
            .map(|(name, t)| ArrayEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| VarNetError::Format(e.to_string()))?;
    let payload: usize = arrays.iter().map(|(_, t)| t.len() * 8).sum();
    let mut buf = Vec::with_capacity(20 + json.len() + payload + DIGEST_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in &arrays {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

/// Parses checkpoint bytes. The version is checked before anything else is read.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(VarNetError::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(VarNetError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 20 + DIGEST_LEN {
        return Err(VarNetError::Format("checkpoint is truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(VarNetError::Format("checkpoint digest mismatch (truncated or corrupt)".into()));
    }
    let mlen = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
    let json = body
        .get(20..20usize.saturating_add(mlen))
        .ok_or_else(|| VarNetError::Format("manifest extends past end of file".into()))?;
    let m: Manifest = serde_json::from_slice(json).map_err(|e| VarNetError::Format(format!("bad manifest: {e}")))?;
    let mut data = &body[20 + mlen..];
    let expected: usize = m.arrays.iter().map(|a| a.rows * a.cols * 8).sum();
    if data.len() != expected {
        return Err(VarNetError::Format(format!(
            "array payload has {} bytes, manifest describes {expected}",
            data.len()
        )));
    }
    let mut params = Vec::new();
    let mut reference = Vec::new();
    let mut moments = std::collections::HashMap::new();
    for a in &m.arrays {
        let (chunk, rest) = data.split_at(a.rows * a.cols * 8);
        data = rest;
        let values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::from_vec(a.rows, a.cols, values)?;
        if let Some(name) = a.name.strip_prefix("param/") {
            params.push((name.to_string(), t));
        } else if a.name.starts_with("reference/") {
            reference.push(t);
        } else if let Some(key) = a.name.strip_prefix("adam/") {
            moments.insert(key.to_string(), t);
        } else {
            return Err(VarNetError::Format(format!("unknown array `{}`", a.name)));
        }
    }

    let mut model = VarNet::new(m.model, m.spec, 0)?;
    model.load_params(params)?;
    model.reference = reference;

    let mut opt = |tag: &str, st: &OptState, disc: bool| -> Result<Adam> {
        let ids = model.store.ids_where(|g| g.is_discriminator() == disc);
        let mut a = Adam::new(st.config, &model.store, ids);
        a.steps = st.steps;
        for (slot, id) in a.params.clone().iter().enumerate() {
            let name = &model.store.entry(*id).name;
            for (kind, dst) in [("m", &mut a.first[slot]), ("v", &mut a.second[slot])] {
                let t = moments
                    .remove(&format!("{tag}/{kind}/{name}"))
                    .ok_or_else(|| VarNetError::Format(format!("missing optimizer state for `{name}`")))?;
                if t.shape() != dst.shape() {
                    return Err(VarNetError::Format(format!("optimizer state for `{name}` has the wrong shape")));
                }
                *dst = t;
            }
        }
        Ok(a)
    };
    let opt_disc = opt("disc", &m.disc_optimizer, true)?;
    let opt_encdec = opt("encdec", &m.encdec_optimizer, false)?;

    let seed: [u8; 32] = m
        .rng
        .seed
        .as_slice()
        .try_into()
        .map_err(|_| VarNetError::Format("rng seed must be 32 bytes".into()))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(m.rng.stream);
    rng.set_word_pos(
        m.rng
            .word_pos
            .parse()
            .map_err(|_| VarNetError::Format("bad rng position".into()))?,
    );
    Ok(Checkpoint {
        state: TrainState {
            model,
            opt_disc,
            opt_encdec,
            step: m.step,
            seed: m.seed,
            rng,
        },
        hyper: m.hyper,
        dataset: m.dataset,
        linkage: m.linkage,
    })
}

/// Writes atomically: a temporary sibling file is renamed over `path`.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = to_bytes(ck)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        VarNetError::io(path, e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| VarNetError::io(path, e))?;
    from_bytes(&bytes)
}
