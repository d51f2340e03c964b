use super::table::{l2, EmbeddingTable, Symbol};
use crate::error::{Error, Result};
use crate::kb::EntityId;
use crate::par;

/// The `k` entities nearest (L2) to the mean word vector of `phrase`,
/// ascending by distance, ties by entity id. All-OOV phrases return an
/// empty list.
pub fn knn_candidates(table: &EmbeddingTable, phrase: &str, k: usize) -> Result<Vec<(EntityId, f64)>> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let Some(query) = table.phrase_vector(phrase) else {
        return Ok(Vec::new());
    };
    knn_vector(table, &query, k)
}

pub fn knn_vector(table: &EmbeddingTable, query: &[f64], k: usize) -> Result<Vec<(EntityId, f64)>> {
    if query.len() != table.dim() {
        return Err(Error::Shape(format!("query has dim {}, table {}", query.len(), table.dim())));
    }
    let rows = table.entity_rows();
    let mut scored: Vec<(f64, usize)> = par::map(&rows, |&r| (l2(query, table.row(r)), r));
    let id = |r: usize| match &table.symbols()[r] {
        Symbol::Entity(e) => e,
        Symbol::Word(_) => unreachable!("entity_rows only yields entities"),
    };
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| id(a.1).cmp(id(b.1))));
    Ok(scored.into_iter().take(k).map(|(d, r)| (id(r).clone(), d)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(n_ent: usize, n_word: usize, seed: u64) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = EmbeddingTable::new(3);
        for i in 0..n_word {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            t.insert_with(Symbol::Word(format!("w{i}")), &v);
        }
        for i in 0..n_ent {
            // coarse grid so that distance ties actually occur
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
            t.insert_with(Symbol::Entity(EntityId::new(format!("Q{}", n_ent - i))), &v);
        }
        t
    }

    #[test]
    fn argument_errors_and_oov() {
        let t = random_table(5, 5, 0);
        assert!(knn_candidates(&t, "w1", 0).is_err());
        assert!(knn_candidates(&t, "nothing here", 3).unwrap().is_empty());
        assert_eq!(knn_candidates(&t, "w1", 50).unwrap().len(), 5);
    }

    proptest! {
        #[test]
        fn matches_full_scan(n_ent in 1usize..60, seed in 0u64..500, k in 1usize..80, q in 0usize..20) {
            let t = random_table(n_ent, 20, seed);
            let phrase = format!("w{q} w{}", (q + 7) % 20);
            let got = knn_candidates(&t, &phrase, k).unwrap();
            // oracle: recompute the mean and distances by hand, sort on (distance, id)
            let a = t.word(&format!("w{q}")).unwrap();
            let b = t.word(&format!("w{}", (q + 7) % 20)).unwrap();
            let mean: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect();
            let mut all: Vec<(f64, String)> = Vec::new();
            for (r, s) in t.symbols().iter().enumerate() {
                if let Symbol::Entity(e) = s {
                    let d: f64 = t.row(r).iter().zip(&mean).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                    all.push((d, e.0.clone()));
                }
            }
            all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
            all.truncate(k);
            prop_assert_eq!(got.len(), all.len());
            for ((e, d), (od, oe)) in got.iter().zip(&all) {
                prop_assert_eq!(&e.0, oe);
                prop_assert!((d - od).abs() < 1e-12);
                prop_assert!(e.0.starts_with('Q'));
            }
        }
    }
}
