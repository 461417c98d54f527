//! The projection network: encoder, distribution-parameter heads, sampling
//! bottleneck, mirrored decoder with reconstruction and classifier heads,
//! the composite loss, and the mini-batch training loop.
//!
//! Loss layout: total = (recon + rho·class) + beta·reg + l2, where recon is
//! mean binary cross-entropy over all feature cells, class is mean
//! categorical cross-entropy, reg is the batch-mean per-point KL of the
//! active sampling scheme, and l2 penalizes the bottleneck heads.

use crate::adam::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::graph::{Graph, Gradients, NodeId};
use crate::rng::stream;
use crate::sampling::{
    dirichlet_polygon_layer, gaussian_layer, gennormal_layer, open_uniform_noise,
    standard_gennormal_noise, standard_normal_noise, PolygonHeads, SamplingScheme,
};
use crate::tensor::{broadcast_zip, Tensor};
use rand::Rng;

pub const LATENT_DIM: usize = 2;

/// Where the classifier head reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifierAttachment {
    /// Last decoder hidden layer (shares the decoder trunk). The default.
    #[default]
    DecoderLast,
    /// Directly on the 2D bottleneck output, for ablation.
    Bottleneck,
}

/// What the bottleneck L2 coefficient multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L2Mode {
    /// 0.5-scaled sum of squared bottleneck-head kernel weights. The default.
    #[default]
    Kernel,
    /// 0.5-scaled batch mean of the squared bottleneck activations, the
    /// rejected-but-available alternative reading.
    Activity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them in reverse.
    pub encoder_widths: Vec<usize>,
    pub class_count: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, class_count: usize) -> Self {
        Self {
            input_dim,
            encoder_widths: vec![512, 128, 32],
            class_count,
        }
    }

    pub fn with_widths(mut self, widths: Vec<usize>) -> Self {
        self.encoder_widths = widths;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.class_count == 0 || self.encoder_widths.is_empty() {
            return Err(Error::invalid(format!(
                "architecture needs positive dims, got input {} classes {} widths {:?}",
                self.input_dim, self.class_count, self.encoder_widths
            )));
        }
        Ok(())
    }

    fn last_hidden(&self) -> usize {
        *self.encoder_widths.last().expect("validated nonempty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rho: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub l2_bottleneck: f64,
    pub l2_mode: L2Mode,
    pub scheme: SamplingScheme,
    /// True for the autoencoder / label-supervised compatibility modes: the
    /// bottleneck becomes a plain dense layer and reg is identically zero.
    pub deterministic_bottleneck: bool,
    pub classifier: ClassifierAttachment,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            beta: 0.1,
            batch_size: 256,
            epochs: 20,
            seed: 0,
            l2_bottleneck: 0.5,
            l2_mode: L2Mode::Kernel,
            scheme: SamplingScheme::Gaussian,
            deterministic_bottleneck: false,
            classifier: ClassifierAttachment::DecoderLast,
            learning_rate: 1e-3,
        }
    }
}

impl TrainConfig {
    /// Plain autoencoder: no classifier pull, no regularizer, dense bottleneck.
    pub fn autoencoder() -> Self {
        Self {
            rho: 0.0,
            beta: 0.0,
            deterministic_bottleneck: true,
            ..Self::default()
        }
    }

    /// Label-supervised projection without shape regularization.
    pub fn supervised_deterministic() -> Self {
        Self {
            beta: 0.0,
            deterministic_bottleneck: true,
            ..Self::default()
        }
    }

    /// The full shape-regularized stochastic model.
    pub fn shaped(scheme: SamplingScheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rho < 0.0 || self.beta < 0.0 || self.batch_size == 0 {
            return Err(Error::invalid(format!(
                "train config needs rho >= 0, beta >= 0, batch_size >= 1; got rho {} beta {} batch {}",
                self.rho, self.beta, self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let SamplingScheme::GeneralizedNormal { omega } = self.scheme {
            if !(omega > 0.0) {
                return Err(Error::invalid(format!(
                    "generalized-Normal omega must be positive, got {omega}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub recon: f64,
    pub class: f64,
    pub reg: f64,
    pub l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// The additivity identity total = (recon + rho·class) + beta·reg + l2,
    /// in the same association order as the forward pass.
    pub fn recombined(&self, rho: f64, beta: f64) -> f64 {
        ((self.recon + rho * self.class) + beta * self.reg) + self.l2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            w: Tensor::new(vec![fan_in, fan_out], data).expect("shape matches"),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    /// Glorot kernel with a constant bias. Used for the log-scale heads,
    /// which start at a small spread (sigma ≈ 0.22) so the latent is
    /// informative from the first steps; the KL term then grows the spread
    /// toward the prior instead of collapsing the posterior means.
    fn glorot_with_bias(fan_in: usize, fan_out: usize, bias: f64, rng: &mut impl Rng) -> Self {
        let mut d = Self::glorot(fan_in, fan_out, rng);
        d.b = Tensor::new(vec![fan_out], vec![bias; fan_out]).expect("shape matches");
        d
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Tensor::zeros(&[fan_in, fan_out]),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    fn apply_value(&self, x: &Tensor) -> Result<Tensor> {
        let xw = x.matmul(&self.w)?;
        broadcast_zip("add_bias", &xw, &self.b, |a, b| a + b)
    }
}

/// Bottleneck parameters for the active scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    Deterministic {
        z: Dense,
    },
    Gaussian {
        mu: Dense,
        log_sigma: Dense,
    },
    GenNormal {
        mu: Dense,
        log_alpha: Dense,
    },
    DirichletPolygon {
        log_alpha: Dense,
        phi: Dense,
        /// Two outputs: log s_x, log s_y.
        log_s: Dense,
        /// Two outputs: t_x, t_y. Absent when translation is disabled.
        t: Option<Dense>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: Vec<Dense>,
    pub head: HeadParams,
    pub decoder: Vec<Dense>,
    pub recon: Dense,
    pub classifier: Dense,
}

/// A trained (or initialized) model: everything needed to project and to
/// resume evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub scheme: SamplingScheme,
    pub deterministic_bottleneck: bool,
    pub classifier_attachment: ClassifierAttachment,
    pub params: ModelParams,
}

impl ModelParams {
    pub fn init(
        arch: &Architecture,
        scheme: &SamplingScheme,
        deterministic: bool,
        classifier: ClassifierAttachment,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        arch.validate()?;
        let mut encoder = Vec::new();
        let mut prev = arch.input_dim;
        for &w in &arch.encoder_widths {
            encoder.push(Dense::glorot(prev, w, rng));
            prev = w;
        }
        let hid = arch.last_hidden();
        let head = if deterministic {
            HeadParams::Deterministic {
                z: Dense::glorot(hid, LATENT_DIM, rng),
            }
        } else {
            match scheme {
                SamplingScheme::Gaussian => HeadParams::Gaussian {
                    mu: Dense::glorot(hid, LATENT_DIM, rng),
                    log_sigma: Dense::glorot_with_bias(hid, LATENT_DIM, -1.5, rng),
                },
                SamplingScheme::GeneralizedNormal { .. } => HeadParams::GenNormal {
                    mu: Dense::glorot(hid, LATENT_DIM, rng),
                    log_alpha: Dense::glorot_with_bias(hid, LATENT_DIM, -1.5, rng),
                },
                SamplingScheme::DirichletPolygon {
                    vertices,
                    translation,
                    ..
                } => HeadParams::DirichletPolygon {
                    log_alpha: Dense::glorot(hid, vertices.shape()[1], rng),
                    phi: Dense::glorot(hid, 1, rng),
                    log_s: Dense::glorot(hid, 2, rng),
                    t: translation.then(|| Dense::glorot(hid, 2, rng)),
                },
            }
        };
        let mut decoder = Vec::new();
        let mut prev = LATENT_DIM;
        for &w in arch.encoder_widths.iter().rev() {
            decoder.push(Dense::glorot(prev, w, rng));
            prev = w;
        }
        let recon = Dense::glorot(prev, arch.input_dim, rng);
        let cls_in = match classifier {
            ClassifierAttachment::DecoderLast => prev,
            ClassifierAttachment::Bottleneck => LATENT_DIM,
        };
        let classifier = Dense::glorot(cls_in, arch.class_count, rng);
        Ok(Self {
            encoder,
            head,
            decoder,
            recon,
            classifier,
        })
    }

    /// All-zero weights with the same shapes (useful in tests).
    pub fn zeroed_like(&self) -> Self {
        let zero = |d: &Dense| Dense::zeros(d.w.shape()[0], d.w.shape()[1]);
        Self {
            encoder: self.encoder.iter().map(zero).collect(),
            head: match &self.head {
                HeadParams::Deterministic { z } => HeadParams::Deterministic { z: zero(z) },
                HeadParams::Gaussian { mu, log_sigma } => HeadParams::Gaussian {
                    mu: zero(mu),
                    log_sigma: zero(log_sigma),
                },
                HeadParams::GenNormal { mu, log_alpha } => HeadParams::GenNormal {
                    mu: zero(mu),
                    log_alpha: zero(log_alpha),
                },
                HeadParams::DirichletPolygon {
                    log_alpha,
                    phi,
                    log_s,
                    t,
                } => HeadParams::DirichletPolygon {
                    log_alpha: zero(log_alpha),
                    phi: zero(phi),
                    log_s: zero(log_s),
                    t: t.as_ref().map(zero),
                },
            },
            decoder: self.decoder.iter().map(zero).collect(),
            recon: zero(&self.recon),
            classifier: zero(&self.classifier),
        }
    }

    /// Named tensors in a fixed traversal order shared by the mutable
    /// walker and the graph registration below.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, d) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.w"), &d.w));
            out.push((format!("encoder.{i}.b"), &d.b));
        }
        for (name, d) in self.head_denses() {
            out.push((format!("{name}.w"), &d.w));
            out.push((format!("{name}.b"), &d.b));
        }
        for (i, d) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{i}.w"), &d.w));
            out.push((format!("decoder.{i}.b"), &d.b));
        }
        out.push(("recon.w".into(), &self.recon.w));
        out.push(("recon.b".into(), &self.recon.b));
        out.push(("classifier.w".into(), &self.classifier.w));
        out.push(("classifier.b".into(), &self.classifier.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        for (i, d) in self.encoder.iter_mut().enumerate() {
            out.push((format!("encoder.{i}.w"), &mut d.w));
            out.push((format!("encoder.{i}.b"), &mut d.b));
        }
        match &mut self.head {
            HeadParams::Deterministic { z } => {
                out.push(("head.z.w".into(), &mut z.w));
                out.push(("head.z.b".into(), &mut z.b));
            }
            HeadParams::Gaussian { mu, log_sigma } => {
                out.push(("head.mu.w".into(), &mut mu.w));
                out.push(("head.mu.b".into(), &mut mu.b));
                out.push(("head.log_sigma.w".into(), &mut log_sigma.w));
                out.push(("head.log_sigma.b".into(), &mut log_sigma.b));
            }
            HeadParams::GenNormal { mu, log_alpha } => {
                out.push(("head.mu.w".into(), &mut mu.w));
                out.push(("head.mu.b".into(), &mut mu.b));
                out.push(("head.log_alpha.w".into(), &mut log_alpha.w));
                out.push(("head.log_alpha.b".into(), &mut log_alpha.b));
            }
            HeadParams::DirichletPolygon {
                log_alpha,
                phi,
                log_s,
                t,
            } => {
                out.push(("head.log_alpha.w".into(), &mut log_alpha.w));
                out.push(("head.log_alpha.b".into(), &mut log_alpha.b));
                out.push(("head.phi.w".into(), &mut phi.w));
                out.push(("head.phi.b".into(), &mut phi.b));
                out.push(("head.log_s.w".into(), &mut log_s.w));
                out.push(("head.log_s.b".into(), &mut log_s.b));
                if let Some(t) = t {
                    out.push(("head.t.w".into(), &mut t.w));
                    out.push(("head.t.b".into(), &mut t.b));
                }
            }
        }
        for (i, d) in self.decoder.iter_mut().enumerate() {
            out.push((format!("decoder.{i}.w"), &mut d.w));
            out.push((format!("decoder.{i}.b"), &mut d.b));
        }
        out.push(("recon.w".into(), &mut self.recon.w));
        out.push(("recon.b".into(), &mut self.recon.b));
        out.push(("classifier.w".into(), &mut self.classifier.w));
        out.push(("classifier.b".into(), &mut self.classifier.b));
        out
    }

    fn head_denses(&self) -> Vec<(&'static str, &Dense)> {
        match &self.head {
            HeadParams::Deterministic { z } => vec![("head.z", z)],
            HeadParams::Gaussian { mu, log_sigma } => {
                vec![("head.mu", mu), ("head.log_sigma", log_sigma)]
            }
            HeadParams::GenNormal { mu, log_alpha } => {
                vec![("head.mu", mu), ("head.log_alpha", log_alpha)]
            }
            HeadParams::DirichletPolygon {
                log_alpha,
                phi,
                log_s,
                t,
            } => {
                let mut v = vec![
                    ("head.log_alpha", log_alpha),
                    ("head.phi", phi),
                    ("head.log_s", log_s),
                ];
                if let Some(t) = t {
                    v.push(("head.t", t));
                }
                v
            }
        }
    }
}

// --- graph registration ----------------------------------------------------

#[derive(Clone, Copy)]
struct DenseIds {
    w: NodeId,
    b: NodeId,
}

impl DenseIds {
    fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        g.affine(x, self.w, self.b)
    }
}

enum HeadIds {
    Deterministic {
        z: DenseIds,
    },
    Gaussian {
        mu: DenseIds,
        log_sigma: DenseIds,
    },
    GenNormal {
        mu: DenseIds,
        log_alpha: DenseIds,
    },
    DirichletPolygon {
        log_alpha: DenseIds,
        phi: DenseIds,
        log_s: DenseIds,
        t: Option<DenseIds>,
    },
}

struct ModelIds {
    encoder: Vec<DenseIds>,
    head: HeadIds,
    decoder: Vec<DenseIds>,
    recon: DenseIds,
    classifier: DenseIds,
    /// Leaf ids in the exact order of [`ModelParams::tensors`].
    ordered: Vec<NodeId>,
}

fn register(g: &mut Graph, p: &ModelParams) -> ModelIds {
    let mut ordered = Vec::new();
    let reg = |g: &mut Graph, d: &Dense, ordered: &mut Vec<NodeId>| {
        let w = g.leaf(d.w.clone());
        let b = g.leaf(d.b.clone());
        ordered.push(w);
        ordered.push(b);
        DenseIds { w, b }
    };
    let encoder = p
        .encoder
        .iter()
        .map(|d| reg(g, d, &mut ordered))
        .collect();
    let head = match &p.head {
        HeadParams::Deterministic { z } => HeadIds::Deterministic {
            z: reg(g, z, &mut ordered),
        },
        HeadParams::Gaussian { mu, log_sigma } => HeadIds::Gaussian {
            mu: reg(g, mu, &mut ordered),
            log_sigma: reg(g, log_sigma, &mut ordered),
        },
        HeadParams::GenNormal { mu, log_alpha } => HeadIds::GenNormal {
            mu: reg(g, mu, &mut ordered),
            log_alpha: reg(g, log_alpha, &mut ordered),
        },
        HeadParams::DirichletPolygon {
            log_alpha,
            phi,
            log_s,
            t,
        } => HeadIds::DirichletPolygon {
            log_alpha: reg(g, log_alpha, &mut ordered),
            phi: reg(g, phi, &mut ordered),
            log_s: reg(g, log_s, &mut ordered),
            t: t.as_ref().map(|t| reg(g, t, &mut ordered)),
        },
    };
    let decoder = p
        .decoder
        .iter()
        .map(|d| reg(g, d, &mut ordered))
        .collect();
    let recon = reg(g, &p.recon, &mut ordered);
    let classifier = reg(g, &p.classifier, &mut ordered);
    ModelIds {
        encoder,
        head,
        decoder,
        recon,
        classifier,
        ordered,
    }
}

/// Per-batch latent noise, drawn outside the graph.
#[derive(Debug, Clone)]
pub enum LatentNoise {
    None,
    /// [m, 2] standard normal draws.
    Normal(Tensor),
    /// [m, 2] standard generalized-Normal draws.
    GenNormal(Tensor),
    /// [m, v] open-interval uniforms for the gamma quantiles.
    Uniform(Tensor),
}

/// Draw the right noise block for one batch of `m` points.
pub fn draw_noise(
    scheme: &SamplingScheme,
    deterministic: bool,
    m: usize,
    rng: &mut impl Rng,
) -> LatentNoise {
    if deterministic {
        return LatentNoise::None;
    }
    match scheme {
        SamplingScheme::Gaussian => LatentNoise::Normal(standard_normal_noise(rng, m, LATENT_DIM)),
        SamplingScheme::GeneralizedNormal { omega } => {
            LatentNoise::GenNormal(standard_gennormal_noise(rng, *omega, m, LATENT_DIM))
        }
        SamplingScheme::DirichletPolygon { vertices, .. } => {
            LatentNoise::Uniform(open_uniform_noise(rng, m, vertices.shape()[1]))
        }
    }
}

struct ForwardNodes {
    total: NodeId,
    recon: NodeId,
    class: NodeId,
    reg: NodeId,
    l2: NodeId,
}

/// Build the full forward pass and composite loss on `g`.
fn build_loss(
    g: &mut Graph,
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
    noise: &LatentNoise,
) -> Result<(ModelIds, ForwardNodes)> {
    let m = x.shape()[0];
    if x.rank() != 2 {
        return Err(Error::invalid(format!(
            "batch must be a matrix, got shape {:?}",
            x.shape()
        )));
    }
    if m == 0 {
        return Err(Error::invalid("batch must be nonempty"));
    }
    if labels.len() != m {
        return Err(Error::ShapeMismatch {
            op: "loss",
            left: vec![m, x.shape()[1]],
            right: vec![labels.len()],
        });
    }
    let k = params.classifier.w.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {k} classes"
        )));
    }

    let ids = register(g, params);
    let x_in = g.leaf(x.clone());

    // encoder trunk
    let mut h = x_in;
    for layer in &ids.encoder {
        let a = layer.apply(g, h)?;
        h = g.relu(a);
    }

    // bottleneck: z plus per-point KL (None when deterministic)
    let (z, kl, head_kernels): (NodeId, Option<NodeId>, Vec<NodeId>) = match (&ids.head, noise) {
        (HeadIds::Deterministic { z }, LatentNoise::None) => {
            let zv = z.apply(g, h)?;
            (zv, None, vec![z.w])
        }
        (HeadIds::Gaussian { mu, log_sigma }, LatentNoise::Normal(n)) => {
            let mu_v = mu.apply(g, h)?;
            let ls_v = log_sigma.apply(g, h)?;
            let (zv, klv) = gaussian_layer(g, mu_v, ls_v, n)?;
            (zv, Some(klv), vec![mu.w, log_sigma.w])
        }
        (HeadIds::GenNormal { mu, log_alpha }, LatentNoise::GenNormal(n)) => {
            let omega = match config.scheme {
                SamplingScheme::GeneralizedNormal { omega } => omega,
                _ => {
                    return Err(Error::invalid(
                        "generalized-Normal head requires a generalized-Normal scheme",
                    ))
                }
            };
            let mu_v = mu.apply(g, h)?;
            let la_v = log_alpha.apply(g, h)?;
            let (zv, klv) = gennormal_layer(g, mu_v, la_v, omega, n)?;
            (zv, Some(klv), vec![mu.w, log_alpha.w])
        }
        (
            HeadIds::DirichletPolygon {
                log_alpha,
                phi,
                log_s,
                t,
            },
            LatentNoise::Uniform(u),
        ) => {
            let (vertices, path) = match &config.scheme {
                SamplingScheme::DirichletPolygon {
                    vertices,
                    gradient_path,
                    ..
                } => (vertices.clone(), *gradient_path),
                _ => {
                    return Err(Error::invalid(
                        "Dirichlet-polygon head requires a Dirichlet-polygon scheme",
                    ))
                }
            };
            let la_v = log_alpha.apply(g, h)?;
            let phi_v = phi.apply(g, h)?;
            let ls_v = log_s.apply(g, h)?;
            let lsx = g.slice_cols(ls_v, 0, 1)?;
            let lsy = g.slice_cols(ls_v, 1, 2)?;
            let t_v = match t {
                Some(t) => {
                    let tv = t.apply(g, h)?;
                    let tx = g.slice_cols(tv, 0, 1)?;
                    let ty = g.slice_cols(tv, 1, 2)?;
                    Some((tx, ty))
                }
                None => None,
            };
            let heads = PolygonHeads {
                phi: phi_v,
                log_sx: lsx,
                log_sy: lsy,
                t: t_v,
            };
            let (zv, klv) = dirichlet_polygon_layer(g, la_v, &heads, &vertices, u, path)?;
            let mut kernels = vec![log_alpha.w, phi.w, log_s.w];
            if let Some(t) = t {
                kernels.push(t.w);
            }
            (zv, Some(klv), kernels)
        }
        _ => {
            return Err(Error::invalid(
                "latent noise kind does not match the bottleneck head",
            ))
        }
    };

    // decoder trunk
    let mut d = z;
    for layer in &ids.decoder {
        let a = layer.apply(g, d)?;
        d = g.relu(a);
    }

    // reconstruction: mean BCE over all m·n cells, computed from logits as
    // softplus(l) − x ⊙ l
    let recon_logits = ids.recon.apply(g, d)?;
    let sp = g.softplus(recon_logits);
    let xl = g.mul(x_in, recon_logits)?;
    let bce = g.sub(sp, xl)?;
    let recon = g.mean_all(bce);

    // classifier: mean categorical cross-entropy via one-hot ⊙ log-softmax
    let cls_in = match config.classifier {
        ClassifierAttachment::DecoderLast => d,
        ClassifierAttachment::Bottleneck => z,
    };
    let logits = ids.classifier.apply(g, cls_in)?;
    let log_probs = g.log_softmax(logits)?;
    let mut onehot = Tensor::zeros(&[m, k]);
    for (i, &l) in labels.iter().enumerate() {
        onehot.set2(i, l, 1.0);
    }
    let oh = g.leaf(onehot);
    let picked = g.mul(oh, log_probs)?;
    let per_row = g.row_sum(picked)?;
    let mean_lp = g.mean_all(per_row);
    let class = g.neg(mean_lp);

    // shape regularizer: batch mean of the per-point KL
    let reg = match kl {
        Some(kl) => g.mean_all(kl),
        None => g.scalar(0.0),
    };

    // bottleneck L2
    let l2 = match config.l2_mode {
        L2Mode::Kernel => {
            let mut acc: Option<NodeId> = None;
            for w in head_kernels {
                let sq = g.mul(w, w)?;
                let s = g.sum_all(sq);
                acc = Some(match acc {
                    Some(a) => g.add(a, s)?,
                    None => s,
                });
            }
            let acc = acc.expect("at least one bottleneck kernel");
            g.scale(acc, 0.5 * config.l2_bottleneck)
        }
        L2Mode::Activity => {
            let sq = g.mul(z, z)?;
            let rs = g.row_sum(sq)?;
            let mean = g.mean_all(rs);
            g.scale(mean, 0.5 * config.l2_bottleneck)
        }
    };

    // total = ((recon + rho·class) + beta·reg) + l2
    let weighted_class = g.scale(class, config.rho);
    let a = g.add(recon, weighted_class)?;
    let weighted_reg = g.scale(reg, config.beta);
    let b = g.add(a, weighted_reg)?;
    let total = g.add(b, l2)?;

    Ok((
        ids,
        ForwardNodes {
            total,
            recon,
            class,
            reg,
            l2,
        },
    ))
}

fn breakdown(g: &Graph, nodes: &ForwardNodes) -> LossBreakdown {
    LossBreakdown {
        recon: g.value(nodes.recon).scalar_value(),
        class: g.value(nodes.class).scalar_value(),
        reg: g.value(nodes.reg).scalar_value(),
        l2: g.value(nodes.l2).scalar_value(),
        total: g.value(nodes.total).scalar_value(),
    }
}

/// Composite loss for one batch, with explicit noise for reproducibility.
pub fn loss(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
    noise: &LatentNoise,
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let (_, nodes) = build_loss(&mut g, params, x, labels, config, noise)?;
    Ok(breakdown(&g, &nodes))
}

/// Loss plus gradients in [`ModelParams::tensors`] order.
pub fn loss_and_gradients(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
    noise: &LatentNoise,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut g = Graph::new();
    let (ids, nodes) = build_loss(&mut g, params, x, labels, config, noise)?;
    let grads: Gradients = g.backward(nodes.total)?;
    let ordered = ids
        .ordered
        .iter()
        .map(|&id| grads.get(&g, id))
        .collect();
    Ok((breakdown(&g, &nodes), ordered))
}

/// Train a model from scratch. Returns the model and the per-epoch mean
/// loss breakdowns.
pub fn train(
    x: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(Model, Vec<LossBreakdown>)> {
    config.validate()?;
    if x.rank() != 2 {
        return Err(Error::invalid(format!(
            "training data must be a matrix, got shape {:?}",
            x.shape()
        )));
    }
    let m = x.shape()[0];
    if m == 0 || labels.len() != m {
        return Err(Error::invalid(format!(
            "dataset has {m} rows but {} labels",
            labels.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let arch = Architecture::new(x.shape()[1], k.max(2));
    train_with_arch(x, labels, config, arch)
}

/// Train with an explicit architecture (width overrides, fixed class count).
pub fn train_with_arch(
    x: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
    arch: Architecture,
) -> Result<(Model, Vec<LossBreakdown>)> {
    config.validate()?;
    arch.validate()?;
    let m = x.shape()[0];
    let mut init_rng = stream(config.seed, "init");
    let mut params = ModelParams::init(
        &arch,
        &config.scheme,
        config.deterministic_bottleneck,
        config.classifier,
        &mut init_rng,
    )?;
    let mut sample_rng = stream(config.seed, "latent-noise");
    let mut adam = AdamState::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });

    let names: Vec<String> = params.tensors().iter().map(|(n, _)| n.clone()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    let mut row_buf = vec![0.0; config.batch_size * x.shape()[1]];
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..m).collect();
        let mut shuffle_rng = stream(config.seed, &format!("shuffle-epoch-{epoch}"));
        for i in (1..m).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut sums = LossBreakdown {
            recon: 0.0,
            class: 0.0,
            reg: 0.0,
            l2: 0.0,
            total: 0.0,
        };
        let mut batches = 0usize;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let b = chunk.len();
            let n = x.shape()[1];
            row_buf.truncate(0);
            let mut batch_labels = Vec::with_capacity(b);
            for &row in chunk {
                row_buf.extend_from_slice(x.row(row));
                batch_labels.push(labels[row]);
            }
            let xb = Tensor::new(vec![b, n], row_buf.clone())?;
            let noise = draw_noise(
                &config.scheme,
                config.deterministic_bottleneck,
                b,
                &mut sample_rng,
            );
            let (bd, grads) = loss_and_gradients(&params, &xb, &batch_labels, config, &noise)?;
            if !bd.total.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite loss {} at epoch {epoch} batch {batch_index}",
                    bd.total
                )));
            }
            {
                let mut tensors = params.tensors_mut();
                let mut refs: Vec<&mut Tensor> = tensors.iter_mut().map(|(_, t)| &mut **t).collect();
                let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
                adam.step(&mut refs, &grads, &name_refs)?;
            }
            sums.recon += bd.recon;
            sums.class += bd.class;
            sums.reg += bd.reg;
            sums.l2 += bd.l2;
            sums.total += bd.total;
            batches += 1;
        }
        let inv = 1.0 / batches as f64;
        history.push(LossBreakdown {
            recon: sums.recon * inv,
            class: sums.class * inv,
            reg: sums.reg * inv,
            l2: sums.l2 * inv,
            total: sums.total * inv,
        });
    }

    Ok((
        Model {
            arch,
            scheme: config.scheme.clone(),
            deterministic_bottleneck: config.deterministic_bottleneck,
            classifier_attachment: config.classifier,
            params,
        },
        history,
    ))
}

// --- inference (value-level, no graph) --------------------------------------

/// Distribution parameters the encoder emits for a batch.
#[derive(Debug, Clone)]
pub enum EncodedParams {
    Deterministic {
        z: Tensor,
    },
    Gaussian {
        mu: Tensor,
        log_sigma: Tensor,
    },
    GenNormal {
        mu: Tensor,
        log_alpha: Tensor,
    },
    DirichletPolygon {
        log_alpha: Tensor,
        phi: Tensor,
        log_s: Tensor,
        t: Option<Tensor>,
    },
}

impl Model {
    fn encoder_hidden(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.arch.input_dim {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: x.shape().to_vec(),
                right: vec![x.rows(), self.arch.input_dim],
            });
        }
        let mut h = x.clone();
        for layer in &self.params.encoder {
            h = layer.apply_value(&h)?.map(|v| v.max(0.0));
        }
        Ok(h)
    }

    /// Distribution parameters for every row of `x`.
    pub fn encode(&self, x: &Tensor) -> Result<EncodedParams> {
        let h = self.encoder_hidden(x)?;
        Ok(match &self.params.head {
            HeadParams::Deterministic { z } => EncodedParams::Deterministic {
                z: z.apply_value(&h)?,
            },
            HeadParams::Gaussian { mu, log_sigma } => EncodedParams::Gaussian {
                mu: mu.apply_value(&h)?,
                log_sigma: log_sigma.apply_value(&h)?,
            },
            HeadParams::GenNormal { mu, log_alpha } => EncodedParams::GenNormal {
                mu: mu.apply_value(&h)?,
                log_alpha: log_alpha.apply_value(&h)?,
            },
            HeadParams::DirichletPolygon {
                log_alpha,
                phi,
                log_s,
                t,
            } => EncodedParams::DirichletPolygon {
                log_alpha: log_alpha.apply_value(&h)?,
                phi: phi.apply_value(&h)?,
                log_s: log_s.apply_value(&h)?,
                t: t.as_ref().map(|t| t.apply_value(&h)).transpose()?,
            },
        })
    }

    /// Deterministic 2D projection: the center of the latent distribution
    /// (mean for Gaussian and generalized-Normal; the affine image of the
    /// mean barycentric vector for the polygon scheme). No sampling noise.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        let m = x.rows();
        match self.encode(x)? {
            EncodedParams::Deterministic { z } => Ok(z),
            EncodedParams::Gaussian { mu, .. } => Ok(mu),
            EncodedParams::GenNormal { mu, .. } => Ok(mu),
            EncodedParams::DirichletPolygon {
                log_alpha,
                phi,
                log_s,
                t,
            } => {
                let vertices = match &self.scheme {
                    SamplingScheme::DirichletPolygon { vertices, .. } => vertices,
                    _ => {
                        return Err(Error::invalid(
                            "model head is Dirichlet-polygon but scheme is not",
                        ))
                    }
                };
                let v = vertices.shape()[1];
                let mut out = Tensor::zeros(&[m, 2]);
                for i in 0..m {
                    let alpha: Vec<f64> = (0..v).map(|j| log_alpha.at2(i, j).exp()).collect();
                    let total: f64 = alpha.iter().sum();
                    let (mut px, mut py) = (0.0, 0.0);
                    for (j, &a) in alpha.iter().enumerate() {
                        let w = a / total;
                        px += vertices.at2(0, j) * w;
                        py += vertices.at2(1, j) * w;
                    }
                    px *= log_s.at2(i, 0).exp();
                    py *= log_s.at2(i, 1).exp();
                    let (sin, cos) = phi.at2(i, 0).sin_cos();
                    let (tx, ty) = match &t {
                        Some(t) => (t.at2(i, 0), t.at2(i, 1)),
                        None => (0.0, 0.0),
                    };
                    out.set2(i, 0, cos * px - sin * py + tx);
                    out.set2(i, 1, sin * px + cos * py + ty);
                }
                Ok(out)
            }
        }
    }

    /// Decoder reconstruction (logistic outputs in [0, 1]) for projected
    /// points `z` [m, 2].
    pub fn reconstruct_from_latent(&self, z: &Tensor) -> Result<Tensor> {
        let mut d = z.clone();
        for layer in &self.params.decoder {
            d = layer.apply_value(&d)?.map(|v| v.max(0.0));
        }
        let logits = self.params.recon.apply_value(&d)?;
        Ok(logits.map(crate::graph::sigmoid_scalar))
    }
}
