//! Independent reference implementations the acceptance runs compare
//! against: a dense FISTA lasso solver and a finite-difference dictionary
//! gradient. Nothing here shares code with the solvers under test — the
//! dense matrix algebra is deliberately written from scratch.

use dsc_core::{KernelStack, Tensor};

/// Column-major dense dictionary: `atoms[j]` is the j-th unit-norm atom.
pub struct DenseDict {
    pub atoms: Vec<Vec<f64>>,
}

impl DenseDict {
    /// Extracts the dense matrix from a 1x1-kernel stack: atom j is the
    /// channel vector of feature j.
    pub fn from_stack(stack: &KernelStack) -> DenseDict {
        let (features, channels) = (stack.features(), stack.channels());
        assert_eq!(stack.kernel_size(), (1, 1), "dense oracle expects 1x1 kernels");
        let k = stack.kernels().data();
        let atoms = (0..features)
            .map(|f| (0..channels).map(|c| k[f * channels + c]).collect())
            .collect();
        DenseDict { atoms }
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// D a
    pub fn synth(&self, a: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (atom, &coef) in self.atoms.iter().zip(a) {
            for (xi, di) in x.iter_mut().zip(atom) {
                *xi += di * coef;
            }
        }
        x
    }

    /// Dᵀ x
    pub fn analyze(&self, x: &[f64]) -> Vec<f64> {
        self.atoms
            .iter()
            .map(|atom| atom.iter().zip(x).map(|(d, v)| d * v).sum())
            .collect()
    }

    /// Largest eigenvalue of DᵀD by power iteration from a fixed start.
    pub fn lipschitz(&self) -> f64 {
        let n = self.atoms.len();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut eig = 1.0;
        for _ in 0..200 {
            let w = self.analyze(&self.synth(&v));
            eig = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if eig == 0.0 {
                return 1.0;
            }
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / eig;
            }
        }
        eig
    }
}

/// ½‖x − Da‖² + λ‖a‖₁
pub fn lasso_objective(d: &DenseDict, x: &[f64], a: &[f64], lambda: f64) -> f64 {
    let r: f64 = d
        .synth(a)
        .iter()
        .zip(x)
        .map(|(s, v)| (v - s) * (v - s))
        .sum();
    0.5 * r + lambda * a.iter().map(|c| c.abs()).sum::<f64>()
}

/// Accelerated proximal gradient (Beck–Teboulle) on the lasso objective.
/// Returns the solution and its objective after `iters` iterations.
pub fn fista(d: &DenseDict, x: &[f64], lambda: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = d.atoms.len();
    let step = 1.0 / (d.lipschitz() * 1.01);
    let mut a = vec![0.0; n];
    let mut y = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let resid: Vec<f64> = d.synth(&y).iter().zip(x).map(|(s, v)| s - v).collect();
        let grad = d.analyze(&resid);
        let a_next: Vec<f64> = y
            .iter()
            .zip(&grad)
            .map(|(yi, gi)| {
                let z = yi - step * gi;
                z.signum() * (z.abs() - lambda * step).max(0.0)
            })
            .collect();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = a_next
            .iter()
            .zip(&a)
            .map(|(n1, n0)| n1 + (t - 1.0) / t_next * (n1 - n0))
            .collect();
        a = a_next;
        t = t_next;
    }
    let obj = lasso_objective(d, x, &a, lambda);
    (a, obj)
}

/// Central finite difference of ½‖x − Φa‖² with respect to every kernel
/// entry, taken by rebuilding the stack around each perturbation.
pub fn fd_dictionary_gradient(
    x: &Tensor,
    a: &Tensor,
    stack: &KernelStack,
    step: f64,
) -> Tensor {
    let recon_energy = |kernels: &[f64]| -> f64 {
        let t = Tensor::from_vec(stack.kernels().shape(), kernels.to_vec()).unwrap();
        let s = KernelStack::new(t, stack.stride()).unwrap();
        let recon = s.conv_transpose(a).unwrap();
        0.5 * x
            .data()
            .iter()
            .zip(recon.data())
            .map(|(xi, ri)| (xi - ri) * (xi - ri))
            .sum::<f64>()
    };
    let base = stack.kernels().data().to_vec();
    let mut grad = vec![0.0; base.len()];
    let mut work = base.clone();
    for i in 0..base.len() {
        work[i] = base[i] + step;
        let plus = recon_energy(&work);
        work[i] = base[i] - step;
        let minus = recon_energy(&work);
        work[i] = base[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    Tensor::from_vec(stack.kernels().shape(), grad).unwrap()
}
