use proptest::prelude::*;
use timeblocks::history::HistoryLayout;

fn layout() -> impl Strategy<Value = HistoryLayout> {
    (1usize..=3).prop_flat_map(|t| {
        (prop::collection::vec(1usize..=3, t), prop::collection::vec(1usize..=3, t + 1))
            .prop_map(|(u, w)| HistoryLayout::flat(&u, &w).unwrap())
    })
}

proptest! {
    #[test]
    fn extend_then_split_round_trips(l in layout(), seed in any::<u64>()) {
        for t in 0..l.horizon() {
            let n = l.count(t).unwrap();
            let h = l.decode(t, seed as usize % n);
            let (u, w) = ((seed >> 20) as usize % l.control_size(t), (seed >> 40) as usize % l.noise_size(t + 1));
            let g = l.extend(&h, u, w).unwrap();
            let (head, seg) = l.split(&g, t).unwrap();
            prop_assert_eq!(&head, &h);
            prop_assert_eq!(seg.entries(), &[u, w]);
            prop_assert_eq!(l.concat(&head, &seg).unwrap(), g);
        }
    }

    #[test]
    fn enumeration_is_lexicographic_and_indexed(l in layout()) {
        for t in 0..=l.horizon() {
            let all: Vec<_> = l.histories(t).collect();
            prop_assert_eq!(all.len(), l.count(t).unwrap());
            for (i, h) in all.iter().enumerate() {
                prop_assert_eq!(l.index_of(h), i);
                prop_assert_eq!(&l.decode(t, i), h);
            }
            prop_assert!(all.windows(2).all(|p| p[0].entries() < p[1].entries()));
        }
    }

    #[test]
    fn split_at_every_stage(l in layout(), pick in any::<usize>()) {
        let t = l.horizon();
        let h = l.decode(t, pick % l.count(t).unwrap());
        for r in 0..=t {
            let (head, seg) = l.split(&h, r).unwrap();
            prop_assert_eq!(head.stage(), r);
            prop_assert_eq!(seg.entries().len(), 2 * (t - r));
            prop_assert_eq!(l.concat(&head, &seg).unwrap(), h.clone());
        }
    }
}

#[test]
fn extending_at_the_horizon_fails() {
    let l = HistoryLayout::flat(&[2], &[2, 2]).unwrap();
    let h = l.history(vec![0, 1, 1]).unwrap();
    assert!(l.extend(&h, 0, 0).is_err());
    assert!(l.history(vec![0, 2, 1]).is_err());
}
