//! Versioned model persistence. One file carries everything `project()`
//! needs: architecture, sampling scheme, training configuration, parameters,
//! the feature-scaling ranges, and a fingerprint of the training data. The
//! layout is magic "SHRP", a little-endian u16 version, length-prefixed
//! sections, and a trailing content hash; every load failure names what
//! broke rather than yielding a half-read model.

use crate::error::{Error, Result};
use crate::network::{Architecture, ClassifierAttachment, L2Mode, Model, ModelParams, TrainConfig};
use crate::rng::stream;
use crate::sampling::{DirichletGradientPath, SamplingScheme};
use crate::tensor::Tensor;
use sha2::{Digest, Sha256};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SHRP";
const VERSION: u16 = 1;

/// A trained model plus the context needed to reuse or audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub version: u16,
    pub model: Model,
    pub train_config: TrainConfig,
    pub feature_min: Option<Vec<f64>>,
    pub feature_max: Option<Vec<f64>>,
    pub data_fingerprint: [u8; 32],
}

impl ModelArtifact {
    pub fn new(
        model: Model,
        train_config: TrainConfig,
        feature_min: Option<Vec<f64>>,
        feature_max: Option<Vec<f64>>,
        data_fingerprint: [u8; 32],
    ) -> Self {
        ModelArtifact { version: VERSION, model, train_config, feature_min, feature_max, data_fingerprint }
    }
}

/// Content hash of a training set: shape, features, and labels.
pub fn dataset_fingerprint(x: &Tensor, y: Option<&[usize]>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((x.rows() as u64).to_le_bytes());
    hasher.update((x.cols() as u64).to_le_bytes());
    for v in x.data() {
        hasher.update(v.to_le_bytes());
    }
    if let Some(labels) = y {
        for &l in labels {
            hasher.update((l as u64).to_le_bytes());
        }
    }
    hasher.finalize().into()
}

// --- encoding ---------------------------------------------------------

struct Enc {
    bytes: Vec<u8>,
}

impl Enc {
    fn new() -> Self {
        Enc { bytes: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.bytes.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u64(t.shape().len() as u64);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        self.f64s(t.data());
    }
}

fn encode_scheme(e: &mut Enc, scheme: &SamplingScheme) {
    match scheme {
        SamplingScheme::Gaussian => e.u8(0),
        SamplingScheme::GeneralizedNormal { omega } => {
            e.u8(1);
            e.f64(*omega);
        }
        SamplingScheme::DirichletPolygon { vertices, translation, gradient_path } => {
            e.u8(2);
            e.tensor(vertices);
            e.u8(u8::from(*translation));
            e.u8(match gradient_path {
                DirichletGradientPath::ImplicitReparam => 0,
                DirichletGradientPath::ScoreFunction => 1,
            });
        }
    }
}

fn encode_meta(artifact: &ModelArtifact) -> Vec<u8> {
    let mut e = Enc::new();
    let arch = &artifact.model.arch;
    e.u64(arch.input_dim as u64);
    e.u64(arch.encoder_widths.len() as u64);
    for &w in &arch.encoder_widths {
        e.u64(w as u64);
    }
    e.u64(arch.class_count as u64);
    encode_scheme(&mut e, &artifact.model.scheme);
    let c = &artifact.train_config;
    e.f64(c.rho);
    e.f64(c.beta);
    e.u64(c.batch_size as u64);
    e.u64(c.epochs as u64);
    e.u64(c.seed);
    e.f64(c.l2_bottleneck);
    e.u8(match c.l2_mode {
        L2Mode::Kernel => 0,
        L2Mode::Activity => 1,
    });
    e.u8(u8::from(c.deterministic_bottleneck));
    e.u8(match c.classifier {
        ClassifierAttachment::DecoderLast => 0,
        ClassifierAttachment::Bottleneck => 1,
    });
    e.f64(c.learning_rate);
    e.bytes
}

fn encode_params(params: &ModelParams) -> Vec<u8> {
    let mut e = Enc::new();
    let tensors = params.tensors();
    e.u64(tensors.len() as u64);
    for (name, t) in tensors {
        e.str(&name);
        e.tensor(t);
    }
    e.bytes
}

fn encode_scaling(artifact: &ModelArtifact) -> Vec<u8> {
    let mut e = Enc::new();
    match (&artifact.feature_min, &artifact.feature_max) {
        (Some(min), Some(max)) => {
            e.u8(1);
            e.f64s(min);
            e.f64s(max);
        }
        _ => e.u8(0),
    }
    e.bytes
}

/// Serialize an artifact to `path`.
pub fn save_model(artifact: &ModelArtifact, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for section in [
        encode_meta(artifact),
        encode_params(&artifact.model.params),
        encode_scaling(artifact),
        artifact.data_fingerprint.to_vec(),
    ] {
        out.extend_from_slice(&(section.len() as u32).to_le_bytes());
        out.extend_from_slice(&section);
    }
    let digest: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&digest);
    std::fs::write(path.as_ref(), out)
        .map_err(|e| Error::format(format!("{}: {e}", path.as_ref().display())))
}

// --- decoding ---------------------------------------------------------

struct Dec<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Dec<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Dec { bytes, at: 0 }
    }
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::format(format!("model file truncated while reading {what}")));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8-byte window")))
    }
    fn usize(&mut self, what: &str) -> Result<usize> {
        Ok(self.u64(what)? as usize)
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8-byte window")))
    }
    fn str(&mut self, what: &str) -> Result<String> {
        let n = self.usize(what)?;
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::format(format!("{what}: invalid UTF-8")))
    }
    fn f64s(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.usize(what)?;
        (0..n).map(|_| self.f64(what)).collect()
    }
    fn tensor(&mut self, what: &str) -> Result<Tensor> {
        let rank = self.usize(what)?;
        let shape: Vec<usize> = (0..rank).map(|_| self.usize(what)).collect::<Result<_>>()?;
        let data = self.f64s(what)?;
        Tensor::new(shape, data)
    }
    fn done(&self) -> bool {
        self.at == self.bytes.len()
    }
}

fn decode_scheme(d: &mut Dec) -> Result<SamplingScheme> {
    match d.u8("scheme tag")? {
        0 => Ok(SamplingScheme::Gaussian),
        1 => Ok(SamplingScheme::GeneralizedNormal { omega: d.f64("omega")? }),
        2 => {
            let vertices = d.tensor("polygon vertices")?;
            let translation = d.u8("translation flag")? != 0;
            let gradient_path = match d.u8("gradient path")? {
                0 => DirichletGradientPath::ImplicitReparam,
                1 => DirichletGradientPath::ScoreFunction,
                t => return Err(Error::format(format!("unknown gradient-path tag {t}"))),
            };
            Ok(SamplingScheme::DirichletPolygon { vertices, translation, gradient_path })
        }
        t => Err(Error::format(format!("unknown sampling-scheme tag {t}"))),
    }
}

fn decode_meta(bytes: &[u8]) -> Result<(Architecture, SamplingScheme, TrainConfig)> {
    let mut d = Dec::new(bytes);
    let input_dim = d.usize("input dim")?;
    let depth = d.usize("encoder depth")?;
    let encoder_widths: Vec<usize> =
        (0..depth).map(|_| d.usize("encoder width")).collect::<Result<_>>()?;
    let class_count = d.usize("class count")?;
    let arch = Architecture { input_dim, encoder_widths, class_count };
    let scheme = decode_scheme(&mut d)?;
    let config = TrainConfig {
        rho: d.f64("rho")?,
        beta: d.f64("beta")?,
        batch_size: d.usize("batch size")?,
        epochs: d.usize("epochs")?,
        seed: d.u64("seed")?,
        l2_bottleneck: d.f64("l2 coefficient")?,
        l2_mode: match d.u8("l2 mode")? {
            0 => L2Mode::Kernel,
            1 => L2Mode::Activity,
            t => return Err(Error::format(format!("unknown l2-mode tag {t}"))),
        },
        scheme: scheme.clone(),
        deterministic_bottleneck: d.u8("bottleneck flag")? != 0,
        classifier: match d.u8("classifier attachment")? {
            0 => ClassifierAttachment::DecoderLast,
            1 => ClassifierAttachment::Bottleneck,
            t => return Err(Error::format(format!("unknown classifier-attachment tag {t}"))),
        },
        learning_rate: d.f64("learning rate")?,
    };
    if !d.done() {
        return Err(Error::format("trailing bytes in the meta section"));
    }
    Ok((arch, scheme, config))
}

fn decode_params(
    bytes: &[u8],
    arch: &Architecture,
    scheme: &SamplingScheme,
    config: &TrainConfig,
) -> Result<ModelParams> {
    // build a correctly-shaped skeleton, then overwrite every tensor
    let mut params = ModelParams::init(
        arch,
        scheme,
        config.deterministic_bottleneck,
        config.classifier,
        &mut stream(0, "artifact-skeleton"),
    )?;
    let mut d = Dec::new(bytes);
    let count = d.usize("tensor count")?;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(Error::format(format!(
            "model file carries {count} tensors, this architecture has {}",
            slots.len()
        )));
    }
    for (name, slot) in slots.iter_mut() {
        let stored_name = d.str("tensor name")?;
        if stored_name != *name {
            return Err(Error::format(format!(
                "tensor order mismatch: file has {stored_name:?} where {name:?} belongs"
            )));
        }
        let t = d.tensor(name)?;
        if t.shape() != slot.shape() {
            return Err(Error::format(format!(
                "tensor {name:?} has shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        **slot = t;
    }
    if !d.done() {
        return Err(Error::format("trailing bytes in the params section"));
    }
    Ok(params)
}

fn decode_scaling(bytes: &[u8]) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>)> {
    let mut d = Dec::new(bytes);
    let present = d.u8("scaling flag")? != 0;
    let result = if present {
        (Some(d.f64s("feature minima")?), Some(d.f64s("feature maxima")?))
    } else {
        (None, None)
    };
    if !d.done() {
        return Err(Error::format("trailing bytes in the scaling section"));
    }
    Ok(result)
}

/// Read an artifact back; every integrity failure is named.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    if bytes.len() < MAGIC.len() + 2 + 32 {
        return Err(Error::format(format!("{}: too short to be a model file", path.display())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(format!("{}: not a model file (bad magic)", path.display())));
    }
    let (payload, stored_digest) = bytes.split_at(bytes.len() - 32);
    let digest: [u8; 32] = Sha256::digest(payload).into();
    if digest != stored_digest {
        return Err(Error::format(format!("{}: content hash mismatch, file is corrupt", path.display())));
    }
    let version = u16::from_le_bytes(payload[4..6].try_into().expect("2-byte window"));
    if version != VERSION {
        return Err(Error::format(format!(
            "{}: model file version {version}, this build reads version {VERSION}",
            path.display()
        )));
    }

    let mut d = Dec::new(&payload[6..]);
    let mut sections = Vec::with_capacity(4);
    for what in ["meta section", "params section", "scaling section", "fingerprint section"] {
        let len = u32::from_le_bytes(d.take(4, what)?.try_into().expect("4-byte window")) as usize;
        sections.push(d.take(len, what)?);
    }
    if !d.done() {
        return Err(Error::format("trailing bytes after the fingerprint section"));
    }

    let (arch, scheme, train_config) = decode_meta(sections[0])?;
    let params = decode_params(sections[1], &arch, &scheme, &train_config)?;
    let (feature_min, feature_max) = decode_scaling(sections[2])?;
    let data_fingerprint: [u8; 32] = sections[3]
        .try_into()
        .map_err(|_| Error::format(format!("fingerprint section is {} bytes, want 32", sections[3].len())))?;

    let model = Model {
        arch,
        scheme,
        deterministic_bottleneck: train_config.deterministic_bottleneck,
        classifier_attachment: train_config.classifier,
        params,
    };
    Ok(ModelArtifact { version, model, train_config, feature_min, feature_max, data_fingerprint })
}
