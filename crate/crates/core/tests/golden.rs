use nf_core::golden::{check_printed, unprinted_components, EXAMPLES};

#[test]
fn printed_components_match() {
    for ex in EXAMPLES {
        let space = ex.space().unwrap();
        for c in check_printed(ex, &space).unwrap() {
            assert!(c.matches, "{} {}{:?}: printed {} computed {}", ex.name, c.tensor, c.index, c.printed, c.computed);
        }
    }
}

fn swap_last_two(i: &[usize]) -> Vec<Vec<usize>> {
    let mut j = i.to_vec();
    let r = j.len();
    j.swap(r - 1, r - 2);
    vec![i.to_vec(), j]
}

fn lower_perms(i: &[usize]) -> Vec<Vec<usize>> {
    let (a, b, c) = (i[1], i[2], i[3]);
    [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
        .iter()
        .map(|p| vec![i[0], p[0], p[1], p[2]])
        .collect()
}

#[test]
fn nothing_unprinted_beyond_symmetry() {
    let id = |i: &[usize]| vec![i.to_vec()];
    for ex in EXAMPLES {
        let space = ex.space().unwrap();
        let cases: Vec<(&str, &dyn Fn(&[usize]) -> Vec<Vec<usize>>)> = match ex.name {
            "ex1" => vec![("N", &id), ("RC", &swap_last_two)],
            "ex2" => vec![("N", &id), ("PB", &lower_perms)],
            _ => vec![("N", &id), ("RG", &swap_last_two), ("RB", &swap_last_two)],
        };
        for (t, eq) in cases {
            let extra = unprinted_components(ex, &space, t, eq).unwrap();
            assert!(extra.is_empty(), "{} {t}: unprinted nonzero components {extra:?}", ex.name);
        }
    }
}
