//! Stochastic kernels `ρ_{s-1:s}`, history feedbacks, flows and the kernels
//! `ρ^γ_{r:t}` a feedback induces on histories.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::history::{History, HistoryLayout};
use crate::maps::HistoryMap;
use crate::space::Distribution;

/// How the rows of a kernel are stored.
#[derive(Debug, Clone)]
pub enum KernelRepr {
    /// One row per history of `H_{s-1}`, in lexicographic order.
    FullTable(Vec<Distribution>),
    /// The same row for every history.
    WhiteNoise(Distribution),
    /// One row per value of the last uncertainty `w_{s-1}`.
    Markov1(Vec<Distribution>),
    /// Row `rows[key(h)]`.
    ReducedViaMap { key: HistoryMap, rows: Vec<Distribution> },
}

/// `ρ_{s-1:s}`: the law of `w_s` given the history `h_{s-1}`.
#[derive(Debug, Clone)]
pub struct StochasticKernel {
    stage: usize,
    repr: KernelRepr,
}

impl StochasticKernel {
    pub fn new(stage: usize, repr: KernelRepr) -> Self {
        StochasticKernel { stage, repr }
    }

    pub fn full_table(stage: usize, rows: Vec<Distribution>) -> Self {
        Self::new(stage, KernelRepr::FullTable(rows))
    }

    pub fn white_noise(stage: usize, row: Distribution) -> Self {
        Self::new(stage, KernelRepr::WhiteNoise(row))
    }

    pub fn markov1(stage: usize, rows: Vec<Distribution>) -> Self {
        Self::new(stage, KernelRepr::Markov1(rows))
    }

    pub fn via_map(stage: usize, key: HistoryMap, rows: Vec<Distribution>) -> Self {
        Self::new(stage, KernelRepr::ReducedViaMap { key, rows })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn repr(&self) -> &KernelRepr {
        &self.repr
    }

    pub fn is_white_noise(&self) -> bool {
        matches!(self.repr, KernelRepr::WhiteNoise(_))
    }

    /// The row used after the stage-`(s-1)` history with entries `prefix`.
    pub fn row(&self, layout: &HistoryLayout, prefix: &[usize]) -> Result<&Distribution> {
        let (rows, i) = match &self.repr {
            KernelRepr::WhiteNoise(d) => return Ok(d),
            KernelRepr::FullTable(rows) => (rows, layout.index(prefix)),
            KernelRepr::Markov1(rows) => (rows, prefix[layout.noise_position(self.stage - 1)]),
            KernelRepr::ReducedViaMap { key, rows } => (rows, key.apply(layout, prefix)),
        };
        rows.get(i).ok_or_else(|| {
            Error::InstanceMismatch(format!(
                "kernel of stage {} has no row {i} (history {prefix:?})",
                self.stage
            ))
        })
    }

    /// Checks row counts and row lengths against the layout.
    pub fn validate(&self, layout: &HistoryLayout) -> Result<()> {
        let s = self.stage;
        if s == 0 || s > layout.horizon() {
            return Err(Error::InstanceMismatch(format!(
                "kernel stage {s} outside 1..={}",
                layout.horizon()
            )));
        }
        let width = layout.noise_size(s);
        let rows: &[Distribution] = match &self.repr {
            KernelRepr::WhiteNoise(d) => core::slice::from_ref(d),
            KernelRepr::FullTable(rows) => {
                let need = layout.count(s - 1).unwrap_or(usize::MAX);
                if rows.len() != need {
                    return Err(Error::InstanceMismatch(format!(
                        "full-table kernel of stage {s} needs {need} rows, got {}",
                        rows.len()
                    )));
                }
                rows
            }
            KernelRepr::Markov1(rows) => {
                let need = layout.noise_size(s - 1);
                if rows.len() != need {
                    return Err(Error::InstanceMismatch(format!(
                        "markov kernel of stage {s} needs {need} rows, got {}",
                        rows.len()
                    )));
                }
                rows
            }
            KernelRepr::ReducedViaMap { rows, .. } => rows,
        };
        if let Some(bad) = rows.iter().find(|d| d.len() != width) {
            return Err(Error::InstanceMismatch(format!(
                "kernel of stage {s} has a row of length {} over a space of size {width}",
                bad.len()
            )));
        }
        Ok(())
    }
}

/// A history feedback `γ_{r:t}`: a control for every history of every
/// stage `r..=t`. Only meaningful on flat layouts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feedback {
    from: usize,
    to: usize,
    maps: Vec<Vec<usize>>,
}

impl Feedback {
    /// `maps[k]` is indexed by the lexicographic position in `H_{from+k}`.
    pub fn new(layout: &HistoryLayout, from: usize, maps: Vec<Vec<usize>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InstanceMismatch("a feedback covers at least one stage".into()));
        }
        let to = from + maps.len() - 1;
        if to >= layout.horizon() {
            return Err(Error::FeedbackDomain { stage: to });
        }
        for (k, map) in maps.iter().enumerate() {
            let s = from + k;
            if Some(map.len()) != layout.count(s) {
                return Err(Error::FeedbackDomain { stage: s });
            }
            if map.iter().any(|&u| u >= layout.control_size(s)) {
                return Err(Error::InstanceMismatch(format!(
                    "feedback control out of range at stage {s}"
                )));
            }
        }
        Ok(Feedback { from, to, maps })
    }

    /// The feedback that plays `f(s, h_s)` everywhere.
    pub fn from_fn(
        layout: &HistoryLayout,
        from: usize,
        to: usize,
        mut f: impl FnMut(usize, &History) -> usize,
    ) -> Result<Self> {
        if from > to {
            return Err(Error::InvalidRange { from, to });
        }
        let maps = (from..=to)
            .map(|s| layout.histories(s).map(|h| f(s, &h)).collect())
            .collect();
        Self::new(layout, from, maps)
    }

    pub fn from_stage(&self) -> usize {
        self.from
    }

    pub fn to_stage(&self) -> usize {
        self.to
    }

    pub fn maps(&self) -> &[Vec<usize>] {
        &self.maps
    }

    pub(crate) fn set(&mut self, k: usize, index: usize, u: usize) {
        self.maps[k][index] = u;
    }

    pub fn covers(&self, r: usize, t: usize) -> bool {
        r >= t || (self.from <= r && t - 1 <= self.to)
    }

    pub fn control(&self, layout: &HistoryLayout, h: &[usize], stage: usize) -> Result<usize> {
        if stage < self.from || stage > self.to {
            return Err(Error::FeedbackDomain { stage });
        }
        Ok(self.maps[stage - self.from][layout.index(h)])
    }
}

fn check_flat(layout: &HistoryLayout) -> Result<()> {
    if layout.is_flat() {
        Ok(())
    } else {
        Err(Error::Representation("feedbacks and flows need a flat layout"))
    }
}

/// The flow `Φ^γ_{r:t}(h_r, w_{r+1:t})`.
pub fn compute_flow(
    layout: &HistoryLayout,
    r: usize,
    t: usize,
    gamma: &Feedback,
    h_r: &History,
    noise: &[usize],
) -> Result<History> {
    check_flat(layout)?;
    if r > t {
        return Err(Error::InvalidRange { from: r, to: t });
    }
    if h_r.stage() != r || noise.len() != t - r {
        return Err(Error::InstanceMismatch(format!(
            "flow {r}..{t} needs a stage-{r} history and {} noises",
            t - r
        )));
    }
    let mut h = h_r.clone();
    for (s, &w) in (r..t).zip(noise) {
        let u = gamma.control(layout, h.entries(), s)?;
        h = layout.extend(&h, u, w)?;
    }
    Ok(h)
}

/// A finitely supported law over `H_t`: `(index in H_t, probability)`
/// pairs in the lexicographic order of the noise paths that produced them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseLaw {
    pub atoms: Vec<(usize, f64)>,
}

impl SparseLaw {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, p)| p).sum()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.atoms
            .iter()
            .filter(|(i, _)| *i == index)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn total_variation(&self, other: &SparseLaw) -> f64 {
        let mut a = self.atoms.clone();
        let mut b = other.atoms.clone();
        a.sort_by_key(|x| x.0);
        b.sort_by_key(|x| x.0);
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    sum += (x.1 - y.1).abs();
                    i += 1;
                    j += 1;
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    sum += x.1;
                    i += 1;
                }
                (Some(x), None) => {
                    sum += x.1;
                    i += 1;
                }
                (_, Some(y)) => {
                    sum += y.1;
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        sum / 2.0
    }
}

/// `ρ^γ_{r:t}(h_r, ·)`: walks every noise path from `h_r` with positive
/// probability, driving controls by `γ`.
pub fn feedback_law(
    layout: &HistoryLayout,
    kernels: &[StochasticKernel],
    gamma: &Feedback,
    h_r: &History,
    t: usize,
) -> Result<SparseLaw> {
    check_flat(layout)?;
    let r = h_r.stage();
    if r > t || t > layout.horizon() {
        return Err(Error::InvalidRange { from: r, to: t });
    }
    if !gamma.covers(r, t) {
        return Err(Error::FeedbackDomain {
            stage: if r < gamma.from { r } else { gamma.to + 1 },
        });
    }
    for s in r + 1..=t {
        match kernels.get(s - 1) {
            Some(k) if k.stage() == s => {}
            _ => {
                return Err(Error::InstanceMismatch(format!("no kernel for stage {s}")));
            }
        }
    }
    let mut law = SparseLaw::default();
    let mut entries = h_r.entries().to_vec();
    walk(layout, kernels, gamma, &mut entries, r, t, 1.0, &mut law)?;
    Ok(law)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    layout: &HistoryLayout,
    kernels: &[StochasticKernel],
    gamma: &Feedback,
    entries: &mut Vec<usize>,
    s: usize,
    t: usize,
    mass: f64,
    law: &mut SparseLaw,
) -> Result<()> {
    if s == t {
        law.atoms.push((layout.index(entries), mass));
        return Ok(());
    }
    let u = gamma.control(layout, entries, s)?;
    let row = kernels[s].row(layout, entries)?;
    entries.push(u);
    for (w, &p) in row.probs().iter().enumerate() {
        if p > 0.0 {
            entries.push(w);
            walk(layout, kernels, gamma, entries, s + 1, t, mass * p, law)?;
            entries.pop();
        }
    }
    entries.pop();
    Ok(())
}

/// `ρ^γ_{r:t}` for every `h_r`, in lexicographic order of `H_r`.
pub fn compose_feedback_kernel(
    layout: &HistoryLayout,
    kernels: &[StochasticKernel],
    gamma: &Feedback,
    r: usize,
    t: usize,
) -> Result<Vec<SparseLaw>> {
    if r > t {
        return Err(Error::InvalidRange { from: r, to: t });
    }
    layout
        .histories(r)
        .map(|h| feedback_law(layout, kernels, gamma, &h, t))
        .collect()
}
