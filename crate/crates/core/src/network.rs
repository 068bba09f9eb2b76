//! Stacked recurrent feature extractor with a regression head and an
//! optional domain discriminator behind a gradient-reversal layer.
//!
//! ```text
//! window -> [cell] -> [cell] -> reduce -> features -> Dense+ReLU -> Dense -> angles
//!                                            |
//!                                  gradient reversal
//!                                            +-> Dense+ReLU -> Dense -> domain logits
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cells::{CellKind, CellParams, CellTrace, SeqBatch};
use crate::error::{Error, Result};
use crate::numerics::{init_params, init_params_with_fan_in, Init, Matrix, ParamSet, SeededRng};

/// How the final recurrent layer's sequence becomes one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureReduction {
    LastTimestep,
    GlobalAveragePool,
}

impl FeatureReduction {
    pub fn name(self) -> &'static str {
        match self {
            FeatureReduction::LastTimestep => "last-timestep",
            FeatureReduction::GlobalAveragePool => "global-average-pool",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "last-timestep" => Some(FeatureReduction::LastTimestep),
            "global-average-pool" => Some(FeatureReduction::GlobalAveragePool),
            _ => None,
        }
    }

    /// GRU networks read the last output, SRU networks pool over time.
    pub fn default_for(kind: CellKind) -> Self {
        match kind {
            CellKind::Sru => FeatureReduction::GlobalAveragePool,
            CellKind::Gru | CellKind::Vanilla => FeatureReduction::LastTimestep,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub cell_type: CellKind,
    pub input_channels: usize,
    pub hidden_size: usize,
    pub num_recurrent_layers: usize,
    pub predictor_hidden: usize,
    pub discriminator_hidden: usize,
    pub output_angles: usize,
    pub use_discriminator: bool,
    pub num_domains: usize,
    pub grl_lambda: f64,
    pub feature_reduction: FeatureReduction,
}

impl NetworkConfig {
    /// Full-size defaults: two 256-unit recurrent layers and 256-unit heads.
    pub fn new(cell_type: CellKind, output_angles: usize) -> Self {
        NetworkConfig {
            cell_type,
            input_channels: 8,
            hidden_size: 256,
            num_recurrent_layers: 2,
            predictor_hidden: 256,
            discriminator_hidden: 256,
            output_angles,
            use_discriminator: false,
            num_domains: 0,
            grl_lambda: -1.0,
            feature_reduction: FeatureReduction::default_for(cell_type),
        }
    }

    pub fn with_discriminator(mut self, num_domains: usize) -> Self {
        self.use_discriminator = true;
        self.num_domains = num_domains;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.output_angles != 15 && self.output_angles != 18 {
            return bad(format!("output_angles must be 15 or 18, got {}", self.output_angles));
        }
        if !(-1.0..=0.0).contains(&self.grl_lambda) {
            return bad(format!("grl_lambda must lie in [-1, 0], got {}", self.grl_lambda));
        }
        if self.input_channels == 0
            || self.hidden_size == 0
            || self.num_recurrent_layers == 0
            || self.predictor_hidden == 0
            || self.discriminator_hidden == 0
        {
            return bad("layer sizes must be positive".into());
        }
        match (self.cell_type, self.feature_reduction) {
            (CellKind::Sru, FeatureReduction::LastTimestep) => {
                return bad("sru networks use global-average-pool".into())
            }
            (CellKind::Gru, FeatureReduction::GlobalAveragePool) => return bad("gru networks use last-timestep".into()),
            _ => {}
        }
        if self.use_discriminator && self.num_domains < 2 {
            return bad(format!(
                "discriminator needs at least 2 domains, got {}",
                self.num_domains
            ));
        }
        Ok(())
    }
}

/// Fully connected layer `y = x Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Matrix,
}

impl Dense {
    pub fn init(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        Dense {
            w: init_params(output, input, Init::UniformScaled, rng),
            b: init_params_with_fan_in(1, output, input, Init::UniformScaled, rng),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            w: Matrix::zeros(output, input),
            b: Matrix::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_transb(&self.w)?;
        y.add_row_broadcast(&self.b)?;
        Ok(y)
    }
}

/// Two dense layers: ReLU hidden layer, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub hidden: Dense,
    pub out: Dense,
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    input: Matrix,
    pre: Matrix,
    act: Matrix,
}

impl Head {
    pub fn init(input: usize, hidden: usize, output: usize, rng: &mut SeededRng) -> Self {
        Head {
            hidden: Dense::init(input, hidden, rng),
            out: Dense::init(hidden, output, rng),
        }
    }

    pub fn output_size(&self) -> usize {
        self.out.w.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, HeadTrace)> {
        let pre = self.hidden.forward(x)?;
        let act = crate::numerics::relu(&pre);
        let y = self.out.forward(&act)?;
        Ok((
            y,
            HeadTrace {
                input: x.clone(),
                pre,
                act,
            },
        ))
    }

    /// Returns the parameter gradients and the gradient at the head input.
    pub fn backward(&self, trace: &HeadTrace, upstream: &Matrix) -> Result<(Head, Matrix)> {
        let mut g = Head {
            hidden: Dense::zeros(self.hidden.w.cols(), self.hidden.w.rows()),
            out: Dense::zeros(self.out.w.cols(), self.out.w.rows()),
        };
        g.out.w.add_matmul_transa(upstream, &trace.act)?;
        g.out.b = upstream.sum_rows();
        let d_act = upstream.matmul(&self.out.w)?;
        let d_pre = d_act.zip_map(&trace.pre, |d, p| if p > 0.0 { d } else { 0.0 })?;
        g.hidden.w.add_matmul_transa(&d_pre, &trace.input)?;
        g.hidden.b = d_pre.sum_rows();
        let dx = d_pre.matmul(&self.hidden.w)?;
        Ok((g, dx))
    }
}

impl ParamSet for Head {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.hidden.w, &self.hidden.b, &self.out.w, &self.out.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.hidden.w, &mut self.hidden.b, &mut self.out.w, &mut self.out.b]
    }
}

/// Trainable tensors of a network; also used for its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<CellParams>,
    pub predictor: Head,
    pub discriminator: Option<Head>,
}

impl ParamSet for NetworkParams {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v: Vec<&Matrix> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        v.extend(self.predictor.tensors());
        if let Some(d) = &self.discriminator {
            v.extend(d.tensors());
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        v.extend(self.predictor.tensors_mut());
        if let Some(d) = &mut self.discriminator {
            v.extend(d.tensors_mut());
        }
        v
    }
}

pub type NetworkGrads = NetworkParams;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: NetworkParams,
}

#[derive(Debug, Clone)]
pub struct NetworkTrace {
    cells: Vec<CellTrace>,
    steps: usize,
    batch: usize,
    predictor: HeadTrace,
    discriminator: Option<HeadTrace>,
}

#[derive(Debug, Clone)]
pub struct NetworkOutput {
    /// `batch x output_angles`.
    pub angles: Matrix,
    /// `batch x num_domains`, present iff the network has a discriminator.
    pub domain_logits: Option<Matrix>,
    pub features: Matrix,
    pub trace: NetworkTrace,
}

impl Network {
    /// Initializes recurrent layers, then the predictor, then the
    /// discriminator, so adding a discriminator leaves the rest unchanged.
    pub fn new(config: NetworkConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.num_recurrent_layers);
        let mut input = config.input_channels;
        for _ in 0..config.num_recurrent_layers {
            let layer = CellParams::init(config.cell_type, input, config.hidden_size, rng);
            input = layer.output_size();
            layers.push(layer);
        }
        let predictor = Head::init(input, config.predictor_hidden, config.output_angles, rng);
        let discriminator = config
            .use_discriminator
            .then(|| Head::init(input, config.discriminator_hidden, config.num_domains, rng));
        Ok(Network {
            config,
            params: NetworkParams {
                layers,
                predictor,
                discriminator,
            },
        })
    }

    pub fn feature_size(&self) -> usize {
        self.params.layers.last().map_or(0, |l| l.output_size())
    }

    pub fn forward(&self, x: &SeqBatch) -> Result<NetworkOutput> {
        if x.width() != self.config.input_channels {
            return Err(Error::ShapeMismatch {
                op: "network input",
                lhs: (x.steps(), self.config.input_channels),
                rhs: (x.steps(), x.width()),
            });
        }
        let mut cells = Vec::with_capacity(self.params.layers.len());
        let mut seq = x.clone();
        for layer in &self.params.layers {
            let (out, trace) = layer.forward(&seq)?;
            cells.push(trace);
            seq = out;
        }
        let features = reduce(&seq, self.config.feature_reduction);
        let (angles, predictor) = self.params.predictor.forward(&features)?;
        // gradient reversal is the identity on the way forward
        let (domain_logits, discriminator) = match &self.params.discriminator {
            Some(d) => {
                let (logits, t) = d.forward(&features)?;
                (Some(logits), Some(t))
            }
            None => (None, None),
        };
        Ok(NetworkOutput {
            angles,
            domain_logits,
            features,
            trace: NetworkTrace {
                cells,
                steps: x.steps(),
                batch: x.batch(),
                predictor,
                discriminator,
            },
        })
    }

    /// Forward pass on one `steps x channels` window.
    pub fn forward_window(&self, window: &Matrix) -> Result<NetworkOutput> {
        self.forward(&SeqBatch::single(window))
    }

    /// Gradients of the network given gradients at both outputs.
    ///
    /// The discriminator's gradient at the feature vector is multiplied by
    /// `grl_lambda` before it joins the predictor's. `domain_grad = None`
    /// eliminates the discriminator path (its gradients are then zero).
    pub fn backward(
        &self,
        trace: &NetworkTrace,
        angle_grad: &Matrix,
        domain_grad: Option<&Matrix>,
    ) -> Result<NetworkGrads> {
        let (pred_grads, mut d_features) = self.params.predictor.backward(&trace.predictor, angle_grad)?;
        let disc_grads = match (&self.params.discriminator, &trace.discriminator, domain_grad) {
            (Some(d), Some(t), Some(dg)) => {
                let (g, d_disc) = d.backward(t, dg)?;
                d_features.add_assign(&gradient_reversal_backward(&d_disc, self.config.grl_lambda)?)?;
                Some(g)
            }
            (Some(d), _, None) => Some(d.zeros_like()),
            (None, _, Some(_)) => {
                return Err(Error::InvalidConfig(
                    "domain gradient given to a network without discriminator".into(),
                ))
            }
            (Some(_), None, Some(_)) => return Err(Error::TraceMismatch("discriminator trace")),
            (None, _, None) => None,
        };
        let mut upstream = expand(&d_features, trace.steps, trace.batch, self.config.feature_reduction)?;
        if trace.cells.len() != self.params.layers.len() {
            return Err(Error::TraceMismatch("layer count"));
        }
        let mut layer_grads = Vec::with_capacity(self.params.layers.len());
        for (layer, cell_trace) in self.params.layers.iter().zip(&trace.cells).rev() {
            let back = layer.backward(cell_trace, &upstream)?;
            layer_grads.push(back.grads);
            upstream = back.input_grad;
        }
        layer_grads.reverse();
        Ok(NetworkParams {
            layers: layer_grads,
            predictor: pred_grads,
            discriminator: disc_grads,
        })
    }
}

/// Backward rule of the gradient-reversal layer: `lambda * upstream`.
pub fn gradient_reversal_backward(upstream: &Matrix, lambda: f64) -> Result<Matrix> {
    if !(-1.0..=0.0).contains(&lambda) {
        return Err(Error::OutOfRange {
            what: "grl_lambda",
            value: lambda,
            lo: -1.0,
            hi: 0.0,
        });
    }
    Ok(upstream.scale(lambda))
}

/// Collapses a `steps x batch` sequence to one `batch x width` feature matrix.
pub fn reduce(seq: &SeqBatch, how: FeatureReduction) -> Matrix {
    match how {
        FeatureReduction::LastTimestep => seq.last_step(),
        FeatureReduction::GlobalAveragePool => {
            let (b, w) = (seq.batch(), seq.width());
            let mut acc = Matrix::zeros(b, w);
            for t in 0..seq.steps() {
                for (a, v) in acc.as_mut_slice().iter_mut().zip(seq.step(t)) {
                    *a += v;
                }
            }
            acc.scale_assign(1.0 / seq.steps() as f64);
            acc
        }
    }
}

fn expand(d_features: &Matrix, steps: usize, batch: usize, how: FeatureReduction) -> Result<SeqBatch> {
    let width = d_features.cols();
    let mut out = SeqBatch::zeros(steps, batch, width);
    match how {
        FeatureReduction::LastTimestep => out.step_mut(steps - 1).copy_from_slice(d_features.as_slice()),
        FeatureReduction::GlobalAveragePool => {
            let scaled = d_features.scale(1.0 / steps as f64);
            for t in 0..steps {
                out.step_mut(t).copy_from_slice(scaled.as_slice());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: CellKind) -> NetworkConfig {
        let mut c = NetworkConfig::new(kind, 15);
        c.hidden_size = 6;
        c.predictor_hidden = 5;
        c.discriminator_hidden = 4;
        c
    }

    #[test]
    fn zero_gru_network_outputs_predictor_bias() {
        let mut rng = SeededRng::new(1);
        let mut net = Network::new(small(CellKind::Gru), &mut rng).unwrap();
        for l in &mut net.params.layers {
            for t in l.tensors_mut() {
                t.fill(0.0);
            }
        }
        let x = SeqBatch::single(&Matrix::filled(128, 8, 3.0));
        let out = net.forward(&x).unwrap();
        // zero features -> relu(b1) -> W2 relu(b1) + b2
        let hidden = crate::numerics::relu(&net.params.predictor.hidden.b);
        let expected = net.params.predictor.out.forward(&hidden).unwrap();
        assert_eq!(out.angles, expected);
        assert!(out.features.as_slice().iter().all(|&v| v == 0.0));
        // with the hidden layer silenced the output is exactly the output bias
        net.params.predictor.hidden.b.fill(0.0);
        let out = net.forward(&x).unwrap();
        assert_eq!(out.angles, net.params.predictor.out.b);
    }

    #[test]
    fn pooling() {
        let v = Matrix::row_vector(&[1.5, -2.0, 0.25]);
        let constant = SeqBatch::new(4, 1, Matrix::from_rows(&[v.as_slice(); 4]).unwrap()).unwrap();
        assert_eq!(reduce(&constant, FeatureReduction::GlobalAveragePool), v);
        let two = SeqBatch::new(2, 1, Matrix::from_rows(&[[1.0], [3.0]]).unwrap()).unwrap();
        assert_eq!(reduce(&two, FeatureReduction::GlobalAveragePool).as_slice(), &[2.0]);
        assert_eq!(reduce(&two, FeatureReduction::LastTimestep).as_slice(), &[3.0]);
    }

    #[test]
    fn gradient_reversal() {
        let up = Matrix::row_vector(&[0.2, -0.5]);
        assert_eq!(gradient_reversal_backward(&up, -1.0).unwrap().as_slice(), &[-0.2, 0.5]);
        assert!(gradient_reversal_backward(&up, 0.0)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
        let up = Matrix::row_vector(&[1.0, 2.0]);
        assert_eq!(gradient_reversal_backward(&up, -0.5).unwrap().as_slice(), &[-0.5, -1.0]);
        assert!(gradient_reversal_backward(&up, 0.5).is_err());
        assert!(gradient_reversal_backward(&up, -1.5).is_err());
    }

    #[test]
    fn config_rules() {
        assert!(NetworkConfig::new(CellKind::Sru, 18).validate().is_ok());
        assert!(NetworkConfig::new(CellKind::Gru, 16).validate().is_err());
        let mut c = NetworkConfig::new(CellKind::Sru, 15);
        c.feature_reduction = FeatureReduction::LastTimestep;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::new(CellKind::Gru, 15).with_discriminator(4);
        c.grl_lambda = 0.3;
        assert!(c.validate().is_err());
        assert!(NetworkConfig::new(CellKind::Gru, 15)
            .with_discriminator(1)
            .validate()
            .is_err());
    }

    #[test]
    fn discriminator_does_not_touch_predictions() {
        let plain = small(CellKind::Sru);
        let adv = small(CellKind::Sru).with_discriminator(3);
        let a = Network::new(plain, &mut SeededRng::new(5)).unwrap();
        let b = Network::new(adv, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a.params.layers, b.params.layers);
        assert_eq!(a.params.predictor, b.params.predictor);
        let mut rng = SeededRng::new(6);
        let data = (0..20 * 8).map(|_| rng.normal()).collect();
        let x = SeqBatch::single(&Matrix::from_vec(20, 8, data).unwrap());
        let (oa, ob) = (a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert_eq!(oa.angles, ob.angles);
        assert_eq!(oa.features, ob.features);
        assert_eq!(ob.domain_logits.unwrap().shape(), (1, 3));
        assert!(oa.domain_logits.is_none());
    }

    #[test]
    fn absent_domain_grad_matches_plain_network() {
        let a = Network::new(small(CellKind::Gru), &mut SeededRng::new(2)).unwrap();
        let b = Network::new(small(CellKind::Gru).with_discriminator(2), &mut SeededRng::new(2)).unwrap();
        let x = SeqBatch::single(&Matrix::filled(10, 8, 0.3));
        let g = Matrix::filled(1, 15, 0.1);
        let ga = a.backward(&a.forward(&x).unwrap().trace, &g, None).unwrap();
        let gb = b.backward(&b.forward(&x).unwrap().trace, &g, None).unwrap();
        assert_eq!(ga.layers, gb.layers);
        assert_eq!(ga.predictor, gb.predictor);
        assert!(gb
            .discriminator
            .unwrap()
            .tensors()
            .iter()
            .all(|t| t.as_slice().iter().all(|&v| v == 0.0)));
        assert!(a
            .backward(&a.forward(&x).unwrap().trace, &g, Some(&Matrix::zeros(1, 2)))
            .is_err());
    }

    #[test]
    fn zero_lambda_annihilates_the_domain_path() {
        let mut cfg = small(CellKind::Sru).with_discriminator(3);
        cfg.grl_lambda = 0.0;
        let net = Network::new(cfg, &mut SeededRng::new(8)).unwrap();
        let x = SeqBatch::single(&Matrix::filled(10, 8, -0.4));
        let out = net.forward(&x).unwrap();
        let g = Matrix::filled(1, 15, 0.2);
        let with = net
            .backward(&out.trace, &g, Some(&Matrix::row_vector(&[0.3, -0.1, -0.2])))
            .unwrap();
        let without = net.backward(&out.trace, &g, None).unwrap();
        assert_eq!(with.layers, without.layers);
        assert_eq!(with.predictor, without.predictor);
    }

    #[test]
    fn wrong_channel_count() {
        let net = Network::new(small(CellKind::Gru), &mut SeededRng::new(2)).unwrap();
        assert!(net.forward_window(&Matrix::zeros(128, 7)).is_err());
    }
}
