/// Adaptive-moment optimizer over a fixed sequence of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    /// One descent step. Tensors are visited in the same order as the moments were laid out.
    pub fn step<'a, 'b>(&mut self, params: impl Iterator<Item = &'a mut [f64]>, grads: impl Iterator<Item = &'b [f64]>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr / bc1;
        let mut offset = 0;
        for (p, g) in params.zip(grads) {
            debug_assert_eq!(p.len(), g.len());
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= step * m[i] / ((v[i] / bc2).sqrt() + self.eps);
            }
            offset += p.len();
        }
        debug_assert_eq!(offset, self.m.len());
    }

    /// Scalar convenience for a single parameter.
    pub fn step_scalar(&mut self, param: &mut f64, grad: f64) {
        self.step(
            std::iter::once(std::slice::from_mut(param)),
            std::iter::once(std::slice::from_ref(&grad)),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut x = [3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = [2.0 * x[0], 2.0 * (x[1] - 1.0)];
            opt.step(std::iter::once(&mut x[..]), std::iter::once(&g[..]));
        }
        assert!(x[0].abs() < 1e-3 && (x[1] - 1.0).abs() < 1e-3, "{x:?}");
    }

    #[test]
    fn first_step_has_learning_rate_magnitude() {
        let mut p = 0.0;
        let mut opt = Adam::new(1, 3e-4);
        opt.step_scalar(&mut p, 123.0);
        assert!((p + 3e-4).abs() < 1e-9);
    }
}
