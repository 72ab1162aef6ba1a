//! Histories `h_t = (w0, u0, w1, .., u_{t-1}, w_t)` and their lexicographic
//! enumeration.
//!
//! A [`HistoryLayout`] fixes, for the whole horizon, the size of the space
//! each history entry lives in. Histories at stage `t` are the prefixes of
//! length `stage_len(t)`. The flat layout has `2t + 1` entries per stage; the
//! decision-hazard-decision layout packs `(head, noise, tail)` per stage.
//! Every table indexed by histories uses the mixed-radix position of the
//! entries, first entry most significant, which is the lexicographic order.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Uncertainty,
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryLayout {
    radices: Vec<usize>,
    kinds: Vec<EntryKind>,
    stage_len: Vec<usize>,
    noise_at: Vec<usize>,
}

/// A realized history at some stage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct History {
    stage: usize,
    entries: Vec<usize>,
}

/// The part `h_{r:s} = (u_{r-1}, w_r, .., u_{s-1}, w_s)` of a history.
///
/// An empty segment has `to_stage + 1 == from_stage`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistorySegment {
    from_stage: usize,
    to_stage: usize,
    entries: Vec<usize>,
}

impl History {
    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<usize> {
        self.entries
    }

    /// Last entry, which is always an uncertainty in flat and DHD layouts
    /// at stage 0 and flat layouts at any stage.
    pub fn last(&self) -> usize {
        *self.entries.last().expect("histories are never empty")
    }
}

impl HistorySegment {
    pub fn from_stage(&self) -> usize {
        self.from_stage
    }

    pub fn to_stage(&self) -> usize {
        self.to_stage
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl HistoryLayout {
    /// Flat layout: one control space per `t in 0..T` and one uncertainty
    /// space per `t in 0..=T`.
    pub fn flat(controls: &[usize], uncertainties: &[usize]) -> Result<Self> {
        if uncertainties.len() != controls.len() + 1 {
            return Err(Error::InstanceMismatch(alloc::format!(
                "{} control spaces need {} uncertainty spaces, got {}",
                controls.len(),
                controls.len() + 1,
                uncertainties.len()
            )));
        }
        let steps = controls
            .iter()
            .zip(&uncertainties[1..])
            .map(|(&u, &w)| alloc::vec![(EntryKind::Control, u), (EntryKind::Uncertainty, w)])
            .collect();
        Self::from_steps(uncertainties[0], steps)
    }

    /// General layout: an initial uncertainty followed by one group of
    /// entries per stage, each group holding exactly one uncertainty.
    pub fn from_steps(initial: usize, steps: Vec<Vec<(EntryKind, usize)>>) -> Result<Self> {
        let mut radices = alloc::vec![initial];
        let mut kinds = alloc::vec![EntryKind::Uncertainty];
        let mut stage_len = alloc::vec![1];
        let mut noise_at = alloc::vec![0];
        for (t, step) in steps.into_iter().enumerate() {
            let noises: Vec<usize> = step
                .iter()
                .enumerate()
                .filter(|(_, (k, _))| *k == EntryKind::Uncertainty)
                .map(|(i, _)| i)
                .collect();
            if noises.len() != 1 {
                return Err(Error::InstanceMismatch(alloc::format!(
                    "step {t} must contain exactly one uncertainty, found {}",
                    noises.len()
                )));
            }
            noise_at.push(radices.len() + noises[0]);
            for (kind, size) in step {
                radices.push(size);
                kinds.push(kind);
            }
            stage_len.push(radices.len());
        }
        if radices.contains(&0) {
            return Err(Error::InstanceMismatch("every space needs at least one element".into()));
        }
        Ok(HistoryLayout {
            radices,
            kinds,
            stage_len,
            noise_at,
        })
    }

    pub fn horizon(&self) -> usize {
        self.stage_len.len() - 1
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn kinds(&self) -> &[EntryKind] {
        &self.kinds
    }

    /// Number of entries of a stage-`t` history.
    pub fn stage_len(&self, t: usize) -> usize {
        self.stage_len[t]
    }

    /// Entry sizes of the step leading from stage `t` to `t + 1`.
    pub fn step_radices(&self, t: usize) -> &[usize] {
        &self.radices[self.stage_len[t]..self.stage_len[t + 1]]
    }

    /// Position of `w_t` among the entries.
    pub fn noise_position(&self, t: usize) -> usize {
        self.noise_at[t]
    }

    /// `|W_t|`.
    pub fn noise_size(&self, t: usize) -> usize {
        self.radices[self.noise_at[t]]
    }

    /// Number of distinct steps from stage `t` to `t + 1`.
    pub fn step_count(&self, t: usize) -> usize {
        self.step_radices(t).iter().product()
    }

    /// `|U_t|` in a flat layout.
    pub fn control_size(&self, t: usize) -> usize {
        self.radices[self.stage_len[t]]
    }

    /// `|W_t|` in a flat layout.
    pub fn uncertainty_size(&self, t: usize) -> usize {
        self.radices[self.stage_len[t] - 1]
    }

    /// True when every step is a single `(control, uncertainty)` pair.
    pub fn is_flat(&self) -> bool {
        (0..self.horizon()).all(|t| {
            let s = self.stage_len[t];
            self.stage_len[t + 1] == s + 2
                && self.kinds[s] == EntryKind::Control
                && self.kinds[s + 1] == EntryKind::Uncertainty
        })
    }

    /// `|H_t|`, or `None` on overflow.
    pub fn count(&self, t: usize) -> Option<usize> {
        product(&self.radices[..self.stage_len[t]])
    }

    /// Number of segments `h_{r+1:t}` between stages `r` and `t`.
    pub fn segment_count(&self, r: usize, t: usize) -> Option<usize> {
        product(&self.radices[self.stage_len[r]..self.stage_len[t]])
    }

    /// Validates raw entries as a history of this layout.
    pub fn history(&self, entries: Vec<usize>) -> Result<History> {
        let stage = self
            .stage_len
            .iter()
            .position(|&l| l == entries.len())
            .ok_or_else(|| {
                Error::InstanceMismatch(alloc::format!(
                    "{} entries do not form a history",
                    entries.len()
                ))
            })?;
        self.check_bounds(0, &entries)?;
        Ok(History { stage, entries })
    }

    pub fn initial(&self, w0: usize) -> Result<History> {
        self.history(alloc::vec![w0])
    }

    fn check_bounds(&self, offset: usize, entries: &[usize]) -> Result<()> {
        for (i, &e) in entries.iter().enumerate() {
            let size = self.radices[offset + i];
            if e >= size {
                return Err(Error::InstanceMismatch(alloc::format!(
                    "entry {} = {e} outside a space of size {size}",
                    offset + i
                )));
            }
        }
        Ok(())
    }

    /// Canonical dynamics `h_{t+1} = (h_t, u_t, w_{t+1})` of a flat layout.
    pub fn extend(&self, h: &History, u: usize, w: usize) -> Result<History> {
        self.extend_with(h, &[u, w])
    }

    /// Appends one whole step to `h`.
    pub fn extend_with(&self, h: &History, step: &[usize]) -> Result<History> {
        if h.stage >= self.horizon() {
            return Err(Error::HorizonExceeded { stage: h.stage });
        }
        let start = self.stage_len[h.stage];
        if step.len() != self.stage_len[h.stage + 1] - start {
            return Err(Error::InstanceMismatch(alloc::format!(
                "stage {} steps have {} entries, got {}",
                h.stage,
                self.stage_len[h.stage + 1] - start,
                step.len()
            )));
        }
        self.check_bounds(start, step)?;
        let mut entries = h.entries.clone();
        entries.extend_from_slice(step);
        Ok(History {
            stage: h.stage + 1,
            entries,
        })
    }

    /// `h_t = (h_r, h_{r+1:t})`.
    pub fn split(&self, h: &History, r: usize) -> Result<(History, HistorySegment)> {
        if r > h.stage {
            return Err(Error::InvalidSplit { at: r, stage: h.stage });
        }
        let cut = self.stage_len[r];
        Ok((
            History {
                stage: r,
                entries: h.entries[..cut].to_vec(),
            },
            HistorySegment {
                from_stage: r + 1,
                to_stage: h.stage,
                entries: h.entries[cut..].to_vec(),
            },
        ))
    }

    /// Inverse of [`split`](Self::split).
    pub fn concat(&self, h: &History, seg: &HistorySegment) -> Result<History> {
        if seg.from_stage != h.stage + 1 {
            return Err(Error::InstanceMismatch(alloc::format!(
                "segment starting at stage {} cannot follow a stage-{} history",
                seg.from_stage,
                h.stage
            )));
        }
        let mut entries = h.entries.clone();
        entries.extend_from_slice(&seg.entries);
        self.history(entries)
    }

    /// Builds a segment `h_{r+1:t}` from raw entries.
    pub fn segment(&self, r: usize, entries: Vec<usize>) -> Result<HistorySegment> {
        let start = self.stage_len[r];
        let end = start + entries.len();
        let to_stage = self
            .stage_len
            .iter()
            .position(|&l| l == end)
            .filter(|&t| t >= r)
            .ok_or_else(|| Error::InstanceMismatch("segment does not end on a stage".into()))?;
        self.check_bounds(start, &entries)?;
        Ok(HistorySegment {
            from_stage: r + 1,
            to_stage,
            entries,
        })
    }

    /// Lexicographic position of a history among `H_t`.
    pub fn index_of(&self, h: &History) -> usize {
        self.index(&h.entries)
    }

    /// Lexicographic position of raw prefix entries.
    pub fn index(&self, entries: &[usize]) -> usize {
        mixed_index(&self.radices[..entries.len()], entries)
    }

    /// Position of a segment `h_{r+1:t}` among all segments of that span.
    pub fn segment_index(&self, r: usize, entries: &[usize]) -> usize {
        let start = self.stage_len[r];
        mixed_index(&self.radices[start..start + entries.len()], entries)
    }

    /// The history of stage `t` at lexicographic position `index`.
    pub fn decode(&self, t: usize, index: usize) -> History {
        History {
            stage: t,
            entries: mixed_decode(&self.radices[..self.stage_len[t]], index),
        }
    }

    pub fn decode_segment(&self, r: usize, t: usize, index: usize) -> HistorySegment {
        HistorySegment {
            from_stage: r + 1,
            to_stage: t,
            entries: mixed_decode(&self.radices[self.stage_len[r]..self.stage_len[t]], index),
        }
    }

    /// All histories of stage `t`, in lexicographic order.
    pub fn histories(&self, t: usize) -> impl Iterator<Item = History> + '_ {
        Odometer::new(&self.radices[..self.stage_len[t]]).map(move |entries| History {
            stage: t,
            entries,
        })
    }

    /// All segments `h_{r+1:t}`, in lexicographic order.
    pub fn segments(&self, r: usize, t: usize) -> impl Iterator<Item = HistorySegment> + '_ {
        Odometer::new(&self.radices[self.stage_len[r]..self.stage_len[t]]).map(move |entries| {
            HistorySegment {
                from_stage: r + 1,
                to_stage: t,
                entries,
            }
        })
    }

    /// Uncertainty entries of a prefix, in order.
    pub fn uncertainties<'a>(&'a self, entries: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
        entries
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == EntryKind::Uncertainty)
            .map(|(e, _)| *e)
    }

    /// Control entries of a prefix, in order.
    pub fn controls<'a>(&'a self, entries: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
        entries
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == EntryKind::Control)
            .map(|(e, _)| *e)
    }
}

pub(crate) fn product(sizes: &[usize]) -> Option<usize> {
    sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s))
}

pub(crate) fn mixed_index(radices: &[usize], digits: &[usize]) -> usize {
    digits
        .iter()
        .zip(radices)
        .fold(0, |acc, (&d, &r)| acc * r + d)
}

pub(crate) fn mixed_decode(radices: &[usize], mut index: usize) -> Vec<usize> {
    let mut digits = alloc::vec![0; radices.len()];
    for (d, &r) in digits.iter_mut().zip(radices).rev() {
        *d = index % r;
        index /= r;
    }
    digits
}

/// Counts through every digit vector of a mixed radix, last digit fastest.
pub(crate) struct Odometer {
    radices: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Odometer {
    pub(crate) fn new(radices: &[usize]) -> Self {
        let next = if radices.contains(&0) {
            None
        } else {
            Some(alloc::vec![0; radices.len()])
        };
        Odometer {
            radices: radices.to_vec(),
            next,
        }
    }
}

impl Iterator for Odometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut following = current.clone();
        let mut i = following.len();
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            following[i] += 1;
            if following[i] < self.radices[i] {
                self.next = Some(following);
                break;
            }
            following[i] = 0;
        }
        Some(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn layout() -> HistoryLayout {
        HistoryLayout::flat(&[2, 2], &[2, 2, 2]).unwrap()
    }

    #[test]
    fn extend_examples() {
        let l = layout();
        let h0 = l.initial(0).unwrap();
        let h1 = l.extend(&h0, 1, 0).unwrap();
        assert_eq!(h1.entries(), &[0, 1, 0]);
        assert_eq!(h1.stage(), 1);
        let h2 = l.extend(&l.history(vec![0, 1, 0]).unwrap(), 0, 1).unwrap();
        assert_eq!(h2.entries(), &[0, 1, 0, 0, 1]);
        assert_eq!(h2.stage(), 2);
        assert_eq!(l.extend(&h2, 0, 0), Err(Error::HorizonExceeded { stage: 2 }));
    }

    #[test]
    fn extend_rejects_out_of_bounds() {
        let l = layout();
        let h0 = l.initial(0).unwrap();
        assert!(matches!(l.extend(&h0, 2, 0), Err(Error::InstanceMismatch(_))));
        assert!(l.initial(5).is_err());
    }

    #[test]
    fn split_examples() {
        let l = layout();
        let h = l.history(vec![0, 1, 0, 0, 1]).unwrap();
        let (h1, seg) = l.split(&h, 1).unwrap();
        assert_eq!(h1.entries(), &[0, 1, 0]);
        assert_eq!(seg.entries(), &[0, 1]);
        let (same, empty) = l.split(&h, 2).unwrap();
        assert_eq!(same, h);
        assert!(empty.is_empty());
        let (h0, seg) = l.split(&h, 0).unwrap();
        assert_eq!(h0.entries(), &[0]);
        assert_eq!(seg.entries().len(), 4);
        assert_eq!(l.split(&h1, 2), Err(Error::InvalidSplit { at: 2, stage: 1 }));
        assert_eq!(l.concat(&h0, &seg).unwrap(), h);
    }

    #[test]
    fn enumeration_is_lexicographic_and_matches_index() {
        let l = HistoryLayout::flat(&[3, 2], &[2, 1, 3]).unwrap();
        for t in 0..=2 {
            let all: Vec<_> = l.histories(t).collect();
            assert_eq!(all.len(), l.count(t).unwrap());
            for (i, h) in all.iter().enumerate() {
                assert_eq!(l.index_of(h), i);
                assert_eq!(&l.decode(t, i), h);
            }
            assert!(all.windows(2).all(|w| w[0].entries() < w[1].entries()));
        }
    }

    #[test]
    fn dhd_layout_stage_lengths() {
        let l = HistoryLayout::from_steps(
            2,
            vec![
                vec![(EntryKind::Control, 2), (EntryKind::Uncertainty, 3), (EntryKind::Control, 2)];
                2
            ],
        )
        .unwrap();
        assert_eq!(l.horizon(), 2);
        assert_eq!(l.stage_len(2), 7);
        assert_eq!(l.count(1), Some(24));
        assert!(!l.is_flat());
        assert!(layout().is_flat());
    }
}
