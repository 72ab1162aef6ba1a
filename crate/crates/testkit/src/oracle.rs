//! Reference computations written independently of the solvers they check.

use timeblocks::history::HistoryLayout;
use timeblocks::kernels::{Feedback, StochasticKernel};
use timeblocks::Cost;

/// `ρ^γ_{r:t}(h_r, ·)` as dense rows over `H_t`, built backwards from the
/// Dirac kernel at `t` by `ρ_{s:t}(h_s) = Σ_w ρ_{s:s+1}(h_s)(w) ρ_{s+1:t}(h_s, γ_s(h_s), w)`.
pub fn recursive_feedback_kernel(
    layout: &HistoryLayout,
    kernels: &[StochasticKernel],
    gamma: &Feedback,
    r: usize,
    t: usize,
) -> Vec<Vec<f64>> {
    let width = layout.count(t).unwrap();
    let mut next: Vec<Vec<f64>> = (0..width)
        .map(|i| {
            let mut row = vec![0.0; width];
            row[i] = 1.0;
            row
        })
        .collect();
    for s in (r..t).rev() {
        next = layout
            .histories(s)
            .map(|h| {
                let u = gamma.control(layout, h.entries(), s).unwrap();
                let p = kernels[s].row(layout, h.entries()).unwrap();
                let mut row = vec![0.0; width];
                for (w, &pw) in p.probs().iter().enumerate() {
                    let child = layout.index(layout.extend(&h, u, w).unwrap().entries());
                    for (acc, q) in row.iter_mut().zip(&next[child]) {
                        *acc += pw * q;
                    }
                }
                row
            })
            .collect();
    }
    next
}

/// Total variation between two dense rows.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

/// `|a - b|` with `∞ - ∞ = 0` and `∞ - finite = ∞`.
pub fn gap(a: Cost, b: Cost) -> f64 {
    match (a.is_infinite(), b.is_infinite()) {
        (true, true) => 0.0,
        (false, false) => (a.get() - b.get()).abs(),
        _ => f64::INFINITY,
    }
}

pub fn max_gap(a: &[Cost], b: &[Cost]) -> f64 {
    assert_eq!(a.len(), b.len(), "tables of different sizes");
    a.iter().zip(b).map(|(&x, &y)| gap(x, y)).fold(0.0, f64::max)
}

/// One step of the history Bellman operator, written out directly:
/// `min_u Σ_{w: p(w) > 0} p(w) φ(h, u, w)`.
pub fn naive_bellman(layout: &HistoryLayout, kernels: &[StochasticKernel], t: usize, phi: &[Cost]) -> Vec<Cost> {
    layout
        .histories(t)
        .map(|h| {
            let p = kernels[t].row(layout, h.entries()).unwrap();
            (0..layout.control_size(t))
                .map(|u| {
                    let mut sum = 0.0;
                    for (w, &pw) in p.probs().iter().enumerate() {
                        if pw > 0.0 {
                            let v = phi[layout.index(layout.extend(&h, u, w).unwrap().entries())];
                            if v.is_infinite() {
                                return Cost::INFINITY;
                            }
                            sum += pw * v.get();
                        }
                    }
                    Cost::of(sum)
                })
                .min()
                .unwrap()
        })
        .collect()
}
