use proptest::prelude::*;

use vsmart_core::model::{canonical_pair, expand_to_set, ingest_raw};
use vsmart_core::{Dataset, ElementId, Multiset, MultisetId};

fn lines() -> impl Strategy<Value = Vec<(u8, u8, u64)>> {
    prop::collection::vec((0u8..5, 0u8..6, 1u64..20), 0..40)
}

fn render(lines: &[(u8, u8, u64)]) -> String {
    lines.iter().map(|(m, e, f)| format!("m{m}\te{e}\t{f}\n")).collect()
}

proptest! {
    #[test]
    fn expansion_preserves_cardinality(pairs in prop::collection::vec((0u8..8, 1u64..30), 1..8)) {
        let m = Multiset::from_pairs(
            MultisetId::new("m").unwrap(),
            pairs.iter().map(|(e, f)| (ElementId::new(format!("e{e}")).unwrap(), *f)),
        ).unwrap();
        prop_assert_eq!(expand_to_set(&m).len() as u64, m.cardinality());
    }

    #[test]
    fn ingest_ignores_line_order(input in lines(), seed in any::<u64>()) {
        let mut shuffled = input.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.rotate_left(i as u32) as usize) % (i + 1));
        }
        let a = ingest_raw(render(&input).as_bytes()).unwrap();
        let b = ingest_raw(render(&shuffled).as_bytes()).unwrap();
        prop_assert_eq!(Dataset::from_tuples(a).unwrap(), Dataset::from_tuples(b).unwrap());
    }

    #[test]
    fn canonical_pair_is_commutative(a in "[a-z]{1,4}", b in "[a-z]{1,4}") {
        prop_assume!(a != b);
        let (a, b) = (MultisetId::new(a).unwrap(), MultisetId::new(b).unwrap());
        prop_assert_eq!(
            canonical_pair(a.clone(), b.clone()).unwrap(),
            canonical_pair(b, a).unwrap()
        );
    }

    #[test]
    fn tsv_round_trips(input in lines()) {
        let d = Dataset::from_tuples(ingest_raw(render(&input).as_bytes()).unwrap()).unwrap();
        let mut buf = Vec::new();
        d.write_tsv(&mut buf).unwrap();
        prop_assert_eq!(Dataset::read_tsv(&buf[..]).unwrap(), d);
    }
}

#[test]
fn self_pairs_are_rejected() {
    let a = MultisetId::new("a").unwrap();
    assert!(canonical_pair(a.clone(), a).is_err());
}
