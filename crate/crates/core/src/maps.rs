//! Maps out of histories (`θ`, kernel keys) and block dynamics `f`.
//!
//! Both come as a small set of named built-ins, explicit tables, or user
//! closures. Tables are indexed by the lexicographic position of the history
//! (for [`HistoryMap`]) or by `x * |segments| + segment position` (for
//! [`BlockDynamics`]).

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::history::{EntryKind, HistoryLayout};

pub type HistoryFn = Arc<dyn Fn(&[usize]) -> usize + Send + Sync>;
pub type DynamicsFn = Arc<dyn Fn(usize, &[usize]) -> usize + Send + Sync>;

/// Stock bookkeeping of the dam examples on an integer volume grid.
///
/// States `0..=capacity` are volumes; `capacity + 1` is the absorbing
/// infeasible state entered whenever a turbine or spill constraint breaks.
/// Uncertainty indices are inflow volumes, spill indices are spill volumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DamStock {
    pub capacity: usize,
    /// Turbined volume for each turbine control index.
    pub turbine: Vec<usize>,
}

impl DamStock {
    pub fn infeasible(&self) -> usize {
        self.capacity + 1
    }

    pub fn state_count(&self) -> usize {
        self.capacity + 2
    }

    pub fn initial(&self, w0: usize) -> usize {
        if w0 > self.capacity {
            self.infeasible()
        } else {
            w0
        }
    }

    /// One step: `(q, a)` uses `x' = min(cap, x - q + a)`, `(q, a, r)` uses
    /// `x' = x - q + a - r` with `0 <= x' <= cap`; `q <= x` always.
    pub fn step(&self, x: usize, step: &[usize]) -> usize {
        if x > self.capacity {
            return self.infeasible();
        }
        let q = self.turbine[step[0]];
        if q > x {
            return self.infeasible();
        }
        let after = x - q + step[1];
        match step.get(2) {
            None => after.min(self.capacity),
            Some(&spill) if spill <= after && after - spill <= self.capacity => after - spill,
            Some(_) => self.infeasible(),
        }
    }
}

/// A map from histories of one stage to state indices.
#[derive(Clone)]
pub enum HistoryMap {
    /// Lexicographic position of the history.
    Identity,
    Constant,
    LastUncertainty,
    /// `min(cap, sum of uncertainty entries)`.
    RunningSum { cap: usize },
    /// Mixed-radix position of the uncertainty entries from the last entry
    /// of stage `from` onwards (in a flat layout: `w_from, .., w_t`).
    NoiseWindow { from: usize },
    DamStock(DamStock),
    Table(Vec<usize>),
    Custom(HistoryFn),
}

impl HistoryMap {
    pub fn custom(f: impl Fn(&[usize]) -> usize + Send + Sync + 'static) -> Self {
        HistoryMap::Custom(Arc::new(f))
    }

    /// Applies the map to the entries of a history of `layout`.
    pub fn apply(&self, layout: &HistoryLayout, entries: &[usize]) -> usize {
        match self {
            HistoryMap::Identity => layout.index(entries),
            HistoryMap::Constant => 0,
            HistoryMap::LastUncertainty => layout
                .uncertainties(entries)
                .last()
                .expect("histories start with an uncertainty"),
            HistoryMap::RunningSum { cap } => {
                layout.uncertainties(entries).fold(0, |acc, w| (acc + w).min(*cap))
            }
            HistoryMap::NoiseWindow { from } => {
                let start = layout.stage_len(*from) - 1;
                entries
                    .iter()
                    .enumerate()
                    .skip(start)
                    .filter(|(i, _)| layout.kinds()[*i] == EntryKind::Uncertainty)
                    .fold(0, |acc, (i, &w)| acc * layout.radices()[i] + w)
            }
            HistoryMap::DamStock(dam) => {
                let mut x = dam.initial(entries[0]);
                let mut stage = 0;
                while layout.stage_len(stage) < entries.len() {
                    let step = &entries[layout.stage_len(stage)..layout.stage_len(stage + 1)];
                    x = dam.step(x, step);
                    stage += 1;
                }
                x
            }
            HistoryMap::Table(table) => table[layout.index(entries)],
            HistoryMap::Custom(f) => f(entries),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HistoryMap::Identity => "identity",
            HistoryMap::Constant => "constant",
            HistoryMap::LastUncertainty => "last_uncertainty",
            HistoryMap::RunningSum { .. } => "running_sum",
            HistoryMap::NoiseWindow { .. } => "noise_window",
            HistoryMap::DamStock(_) => "dam_stock",
            HistoryMap::Table(_) => "table",
            HistoryMap::Custom(_) => "custom",
        }
    }
}

impl fmt::Debug for HistoryMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistoryMap::RunningSum { cap } => write!(f, "RunningSum {{ cap: {cap} }}"),
            HistoryMap::NoiseWindow { from } => write!(f, "NoiseWindow {{ from: {from} }}"),
            HistoryMap::DamStock(d) => write!(f, "{d:?}"),
            HistoryMap::Table(t) => write!(f, "Table({t:?})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Block dynamics `f_{r:t}(x_r, h_{r+1:t}) -> x_t`.
#[derive(Clone)]
pub enum BlockDynamics {
    /// Pairs with [`HistoryMap::Identity`]: the index of the concatenated history.
    Concatenate,
    Constant,
    /// Last uncertainty of the segment (segments always contain one in flat layouts).
    LastUncertainty,
    RunningSum { cap: usize },
    DamStock(DamStock),
    /// Indexed by `x * |segments| + segment position`.
    Table(Vec<usize>),
    Custom(DynamicsFn),
}

impl BlockDynamics {
    pub fn custom(f: impl Fn(usize, &[usize]) -> usize + Send + Sync + 'static) -> Self {
        BlockDynamics::Custom(Arc::new(f))
    }

    /// `f(x, seg)` where `seg` starts right after stage `r`.
    pub fn apply(&self, layout: &HistoryLayout, r: usize, x: usize, seg: &[usize]) -> usize {
        let start = layout.stage_len(r);
        let radices = &layout.radices()[start..start + seg.len()];
        let seg_index = || crate::history::mixed_index(radices, seg);
        let seg_count = || radices.iter().product::<usize>();
        match self {
            BlockDynamics::Concatenate => x * seg_count() + seg_index(),
            BlockDynamics::Constant => 0,
            BlockDynamics::LastUncertainty => seg
                .iter()
                .zip(&layout.kinds()[start..])
                .rev()
                .find(|(_, k)| **k == EntryKind::Uncertainty)
                .map_or(x, |(w, _)| *w),
            BlockDynamics::RunningSum { cap } => seg
                .iter()
                .zip(&layout.kinds()[start..])
                .filter(|(_, k)| **k == EntryKind::Uncertainty)
                .fold(x, |acc, (w, _)| (acc + w).min(*cap)),
            BlockDynamics::DamStock(dam) => {
                let mut x = x;
                let mut stage = r;
                let mut offset = 0;
                while offset < seg.len() {
                    let len = layout.stage_len(stage + 1) - layout.stage_len(stage);
                    x = dam.step(x, &seg[offset..offset + len]);
                    offset += len;
                    stage += 1;
                }
                x
            }
            BlockDynamics::Table(table) => table[x * seg_count() + seg_index()],
            BlockDynamics::Custom(f) => f(x, seg),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BlockDynamics::Concatenate => "concatenate",
            BlockDynamics::Constant => "constant",
            BlockDynamics::LastUncertainty => "last_uncertainty",
            BlockDynamics::RunningSum { .. } => "running_sum",
            BlockDynamics::DamStock(_) => "dam_stock",
            BlockDynamics::Table(_) => "table",
            BlockDynamics::Custom(_) => "custom",
        }
    }
}

impl fmt::Debug for BlockDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockDynamics::RunningSum { cap } => write!(f, "RunningSum {{ cap: {cap} }}"),
            BlockDynamics::DamStock(d) => write!(f, "{d:?}"),
            BlockDynamics::Table(t) => write!(f, "Table({t:?})"),
            other => f.write_str(other.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn builtins_commute_with_their_dynamics() {
        let layout = HistoryLayout::flat(&[2, 2, 2], &[3, 2, 2, 2]).unwrap();
        let pairs = [
            (HistoryMap::Identity, BlockDynamics::Concatenate),
            (HistoryMap::LastUncertainty, BlockDynamics::LastUncertainty),
            (HistoryMap::RunningSum { cap: 3 }, BlockDynamics::RunningSum { cap: 3 }),
            (HistoryMap::Constant, BlockDynamics::Constant),
        ];
        for (theta, f) in pairs {
            for h in layout.histories(3) {
                for r in 0..=3 {
                    let (hr, seg) = layout.split(&h, r).unwrap();
                    assert_eq!(
                        theta.apply(&layout, h.entries()),
                        f.apply(&layout, r, theta.apply(&layout, hr.entries()), seg.entries()),
                        "{theta:?} at r={r}"
                    );
                }
            }
        }
    }

    #[test]
    fn dam_stock_steps() {
        let dam = DamStock {
            capacity: 2,
            turbine: vec![0, 1, 2],
        };
        assert_eq!(dam.step(1, &[0, 1]), 2);
        assert_eq!(dam.step(2, &[0, 1]), 2); // min binds
        assert_eq!(dam.step(1, &[2, 0]), dam.infeasible());
        assert_eq!(dam.step(2, &[0, 1, 1]), 2);
        assert_eq!(dam.step(2, &[0, 1, 0]), dam.infeasible());
        assert_eq!(dam.step(0, &[0, 0, 1]), dam.infeasible());
        assert_eq!(dam.step(dam.infeasible(), &[0, 0]), dam.infeasible());
    }

    #[test]
    fn noise_window_skips_controls() {
        let layout = HistoryLayout::flat(&[5, 5], &[2, 3, 2]).unwrap();
        let m = HistoryMap::NoiseWindow { from: 0 };
        assert_eq!(m.apply(&layout, &[1, 4, 2, 3, 1]), 11);
        let m1 = HistoryMap::NoiseWindow { from: 1 };
        assert_eq!(m1.apply(&layout, &[1, 4, 2, 3, 1]), 2 * 2 + 1);
        assert_eq!(m1.apply(&layout, &[1, 4, 2]), 2);
    }
}
