use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{Network, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    /// Classical momentum: `v ← μv − lr·g; w ← w + v`.
    SgdMomentum { momentum: f64 },
    /// Adam with bias correction.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    /// RMSprop: `s ← ρs + (1−ρ)g²; w ← w − lr·g/(√s + ε)`.
    RmsProp { decay: f64, epsilon: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Rescale the whole gradient when its L2 norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl OptimizerSpec {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            learning_rate,
            clip_norm: None,
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::SgdMomentum { momentum },
            learning_rate,
            clip_norm: None,
        }
    }

    pub fn rmsprop(learning_rate: f64, decay: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::RmsProp { decay, epsilon: 1e-8 },
            learning_rate,
            clip_norm: None,
        }
    }

    /// A learning rate of zero is accepted and leaves parameters unchanged.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate {} must be non-negative",
                self.learning_rate
            )));
        }
        let unit = |name: &str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name}={x} must lie in (0, 1)")))
            }
        };
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::invalid(format!("momentum={momentum} must lie in [0, 1)")));
                }
            }
            OptimizerKind::Adam { beta1, beta2, .. } => {
                unit("beta1", beta1)?;
                unit("beta2", beta2)?;
            }
            OptimizerKind::RmsProp { decay, .. } => unit("decay", decay)?,
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip norm must be positive"));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            OptimizerKind::SgdMomentum { .. } => "sgd",
            OptimizerKind::Adam { .. } => "adam",
            OptimizerKind::RmsProp { .. } => "rmsprop",
        }
    }
}

impl fmt::Display for OptimizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses an optimizer name with default hyper-parameters and a placeholder
/// learning rate of 0.001.
impl FromStr for OptimizerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerSpec::adam(1e-3)),
            "sgd" => Ok(OptimizerSpec::sgd(1e-3, 0.9)),
            "rmsprop" => Ok(OptimizerSpec::rmsprop(1e-3, 0.9)),
            other => Err(Error::invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Optimizer state: one or two moment buffers shaped like the network.
pub struct Optimizer<T> {
    spec: OptimizerSpec,
    first: Network<T>,
    second: Option<Network<T>>,
    steps: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(spec: OptimizerSpec, net: &Network<T>) -> Result<Self> {
        spec.validate()?;
        let second = matches!(spec.kind, OptimizerKind::Adam { .. }).then(|| net.zeros_like());
        Ok(Optimizer {
            spec,
            first: net.zeros_like(),
            second,
            steps: 0,
        })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Network<T>) -> Result<()> {
        let mut sq = T::zero();
        for l in &grads.layers {
            for &g in l.weights.iter().chain(&l.bias) {
                sq += g * g;
            }
        }
        if !sq.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let scale = match self.spec.clip_norm {
            Some(c) if sq.sqrt() > T::lit(c) => T::lit(c) / sq.sqrt(),
            _ => T::one(),
        };
        self.steps += 1;
        let lr = T::lit(self.spec.learning_rate);

        let layers = net.layers.iter_mut().zip(&grads.layers).zip(&mut self.first.layers);
        match self.spec.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                let mu = T::lit(momentum);
                for ((p, g), v) in layers {
                    let params = p.weights.iter_mut().chain(p.bias.iter_mut());
                    let grads = g.weights.iter().chain(&g.bias);
                    let vel = v.weights.iter_mut().chain(v.bias.iter_mut());
                    for ((w, &g), v) in params.zip(grads).zip(vel) {
                        *v = mu * *v - lr * g * scale;
                        *w += *v;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(epsilon));
                let t = self.steps as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                let second = self.second.as_mut().unwrap();
                for (((p, g), m), s) in layers.zip(&mut second.layers) {
                    let params = p.weights.iter_mut().chain(p.bias.iter_mut());
                    let grads = g.weights.iter().chain(&g.bias);
                    let first = m.weights.iter_mut().chain(m.bias.iter_mut());
                    let second = s.weights.iter_mut().chain(s.bias.iter_mut());
                    for (((w, &g), m), s) in params.zip(grads).zip(first).zip(second) {
                        let g = g * scale;
                        *m = b1 * *m + (T::one() - b1) * g;
                        *s = b2 * *s + (T::one() - b2) * g * g;
                        *w -= lr * (*m / c1) / ((*s / c2).sqrt() + eps);
                    }
                }
            }
            OptimizerKind::RmsProp { decay, epsilon } => {
                let (rho, eps) = (T::lit(decay), T::lit(epsilon));
                for ((p, g), s) in layers {
                    let params = p.weights.iter_mut().chain(p.bias.iter_mut());
                    let grads = g.weights.iter().chain(&g.bias);
                    let sq = s.weights.iter_mut().chain(s.bias.iter_mut());
                    for ((w, &g), s) in params.zip(grads).zip(sq) {
                        let g = g * scale;
                        *s = rho * *s + (T::one() - rho) * g * g;
                        *w -= lr * g / (s.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{backward_and_step, batch_loss, Input, NetworkSpec};
    use super::*;

    fn toy() -> (Network<f64>, Vec<(Vec<u32>, Vec<u32>)>) {
        let net = Network::new(&NetworkSpec {
            layer_sizes: vec![6, 4],
            init_seed: 1,
        })
        .unwrap();
        let data = vec![(vec![0, 1], vec![0]), (vec![2, 3], vec![1]), (vec![4, 5], vec![2, 3])];
        (net, data)
    }

    fn batch(data: &[(Vec<u32>, Vec<u32>)]) -> Vec<(Input<'_, f64>, &[u32])> {
        data.iter().map(|(x, t)| (Input::Active(&x[..]), &t[..])).collect()
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        for spec in [
            OptimizerSpec::adam(0.0),
            OptimizerSpec::sgd(0.0, 0.9),
            OptimizerSpec::rmsprop(0.0, 0.9),
        ] {
            let (mut net, data) = toy();
            let before = net.clone();
            let mut opt = Optimizer::new(spec, &net).unwrap();
            for _ in 0..3 {
                backward_and_step(&mut net, &batch(&data), &mut opt).unwrap();
            }
            assert_eq!(net, before, "{spec}");
        }
    }

    #[test]
    fn small_sgd_step_decreases_loss() {
        let (mut net, data) = toy();
        let b = batch(&data);
        let before = batch_loss(&net, &b).unwrap();
        let mut opt = Optimizer::new(OptimizerSpec::sgd(1e-2, 0.0), &net).unwrap();
        backward_and_step(&mut net, &b, &mut opt).unwrap();
        let after = batch_loss(&net, &b).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn optimizers_fit_the_toy() {
        for spec in [
            OptimizerSpec::adam(0.05),
            OptimizerSpec::sgd(0.5, 0.9),
            OptimizerSpec::rmsprop(0.01, 0.9),
        ] {
            let (mut net, data) = toy();
            let b = batch(&data);
            let mut opt = Optimizer::new(spec, &net).unwrap();
            let first = batch_loss(&net, &b).unwrap();
            for _ in 0..200 {
                backward_and_step(&mut net, &b, &mut opt).unwrap();
            }
            let last = batch_loss(&net, &b).unwrap();
            assert!(last < 0.5 * first, "{spec}: {first} -> {last}");
        }
    }

    #[test]
    fn clipping_bounds_the_update() {
        let (mut net, data) = toy();
        let before = net.clone();
        let mut spec = OptimizerSpec::sgd(1.0, 0.0);
        spec.clip_norm = Some(1e-3);
        let mut opt = Optimizer::new(spec, &net).unwrap();
        backward_and_step(&mut net, &batch(&data), &mut opt).unwrap();
        let mut moved = 0.0;
        for (a, b) in net.layers().iter().zip(before.layers()) {
            for (x, y) in a
                .weights()
                .iter()
                .chain(a.bias())
                .zip(b.weights().iter().chain(b.bias()))
            {
                moved += (x - y) * (x - y);
            }
        }
        assert!(moved.sqrt() <= 1e-3 + 1e-12);
    }

    #[test]
    fn validation() {
        assert!(OptimizerSpec::adam(-1.0).validate().is_err());
        assert!(OptimizerSpec::sgd(0.1, 1.0).validate().is_err());
        let bad = OptimizerSpec {
            kind: OptimizerKind::Adam {
                beta1: 1.0,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            learning_rate: 0.1,
            clip_norm: None,
        };
        assert!(bad.validate().is_err());
        assert_eq!("adam".parse::<OptimizerSpec>().unwrap().name(), "adam");
        assert!("lbfgs".parse::<OptimizerSpec>().is_err());
    }
}
