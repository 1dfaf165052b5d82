use crate::error::{Error, Result};
use crate::numerics::{Gradients, ParamStore, Tensor};

/// Linear warmup over the first `warmup_frac` of `total` steps, then linear
/// decay to zero. `step` is zero-based.
pub fn learning_rate(step: usize, total: usize, peak: f64, warmup_frac: f64) -> f64 {
    let total = total.max(1);
    let warm = (warmup_frac * total as f64).floor() as usize;
    if step < warm {
        peak * (step + 1) as f64 / warm as f64
    } else {
        peak * total.saturating_sub(step) as f64 / (total - warm) as f64
    }
}

/// Adam with decoupled weight decay. Parameters flagged `decay = false`
/// (biases, layer-norm gains and offsets) are not decayed; parameters
/// without a gradient this step are left untouched.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    steps: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.steps += 1;
        let n = params.len();
        self.m.resize(n, None);
        self.v.resize(n, None);
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for (id, g) in grads.iter() {
            let i = id.index();
            let decay = params.get(id).decay;
            let m = self.m[i].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v[i].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let p = params.value_mut(id).data_mut();
            for (((pj, gj), mj), vj) in p
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                let update = (*mj / bc1) / ((*vj / bc2).sqrt() + self.eps);
                let wd = if decay { self.weight_decay * *pj } else { 0.0 };
                *pj -= lr * (update + wd);
            }
        }
    }

    /// Moments and step count as named tensors under `prefix`.
    pub fn state_tensors(&self, params: &ParamStore, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = vec![(format!("{prefix}steps"), Tensor::scalar(self.steps as f64))];
        for (id, p) in params.iter() {
            if let Some(m) = self.m.get(id.index()).and_then(|m| m.as_ref()) {
                out.push((format!("{prefix}m.{}", p.name), m.clone()));
            }
            if let Some(v) = self.v.get(id.index()).and_then(|v| v.as_ref()) {
                out.push((format!("{prefix}v.{}", p.name), v.clone()));
            }
        }
        out
    }

    pub fn load_state(&mut self, params: &ParamStore, prefix: &str, tensors: &[(String, Tensor)]) -> Result<()> {
        self.m = vec![None; params.len()];
        self.v = vec![None; params.len()];
        self.steps = 0;
        for (name, t) in tensors {
            let Some(rest) = name.strip_prefix(prefix) else { continue };
            if rest == "steps" {
                self.steps = t.item() as u64;
                continue;
            }
            let (slot, pname) = match rest.split_once('.') {
                Some(("m", p)) => (&mut self.m, p),
                Some(("v", p)) => (&mut self.v, p),
                _ => return Err(Error::invalid(format!("unknown optimizer tensor {name}"))),
            };
            let id = params
                .id(pname)
                .ok_or_else(|| Error::invalid(format!("optimizer state for unknown parameter {pname}")))?;
            slot[id.index()] = Some(t.clone());
        }
        Ok(())
    }
}
