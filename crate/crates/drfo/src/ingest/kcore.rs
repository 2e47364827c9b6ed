//! Iterative k-core filtering on the user-item interaction graph.

use crate::error::{Error, Result};
use crate::ingest::movielens::{RawDataset, RawInteraction};

/// Repeatedly removes users with fewer than `user_k` interactions and items
/// with fewer than `item_k` interactions until neither rule fires, then
/// re-indexes the survivors densely (ascending original index order).
///
/// Removing an item can push a user below its threshold and vice versa, so
/// the filter runs to a fixpoint rather than a single pass.
pub fn k_core_filter(raw: &RawDataset, user_k: usize, item_k: usize) -> Result<RawDataset> {
    let mut user_alive = vec![true; raw.n_users as usize];
    let mut item_alive = vec![true; raw.n_items as usize];

    loop {
        let mut user_deg = vec![0usize; raw.n_users as usize];
        let mut item_deg = vec![0usize; raw.n_items as usize];
        for it in &raw.interactions {
            if user_alive[it.user as usize] && item_alive[it.item as usize] {
                user_deg[it.user as usize] += 1;
                item_deg[it.item as usize] += 1;
            }
        }
        let mut changed = false;
        for u in 0..user_alive.len() {
            if user_alive[u] && user_deg[u] < user_k {
                user_alive[u] = false;
                changed = true;
            }
        }
        for v in 0..item_alive.len() {
            if item_alive[v] && item_deg[v] < item_k {
                item_alive[v] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let user_remap = dense_remap(&user_alive);
    let item_remap = dense_remap(&item_alive);
    let n_users = user_alive.iter().filter(|a| **a).count() as u32;
    let n_items = item_alive.iter().filter(|a| **a).count() as u32;

    let interactions: Vec<RawInteraction> = raw
        .interactions
        .iter()
        .filter(|it| user_alive[it.user as usize] && item_alive[it.item as usize])
        .map(|it| RawInteraction {
            user: user_remap[it.user as usize],
            item: item_remap[it.item as usize],
            rating: it.rating,
        })
        .collect();

    if interactions.is_empty() {
        return Err(Error::Degenerate(format!(
            "k-core filter (user_k = {user_k}, item_k = {item_k}) removed every record"
        )));
    }

    let mut user_attr = Vec::with_capacity(n_users as usize);
    for (u, alive) in user_alive.iter().enumerate() {
        if *alive {
            user_attr.push(raw.user_attr[u]);
        }
    }

    Ok(RawDataset { n_users, n_items, user_attr, interactions })
}

fn dense_remap(alive: &[bool]) -> Vec<u32> {
    let mut remap = vec![u32::MAX; alive.len()];
    let mut next = 0u32;
    for (i, a) in alive.iter().enumerate() {
        if *a {
            remap[i] = next;
            next += 1;
        }
    }
    remap
}

#[cfg(test)]
mod tests {
    use super::*;

    fn it(user: u32, item: u32) -> RawInteraction {
        RawInteraction { user, item, rating: 4 }
    }

    /// Hand-simulated fixpoint: dropping user 3 kills item 3 (2-core), which
    /// pushes user 2 below its 3-core threshold.
    #[test]
    fn cascade_reaches_hand_computed_fixpoint() {
        let raw = RawDataset {
            n_users: 5,
            n_items: 4,
            user_attr: vec![0, 1, 0, 1, 1],
            interactions: vec![
                it(0, 0), it(0, 1), it(0, 2),
                it(1, 0), it(1, 1), it(1, 2),
                it(2, 0), it(2, 1), it(2, 3),
                it(3, 3),
                it(4, 0), it(4, 1), it(4, 2),
            ],
        };
        let filtered = k_core_filter(&raw, 3, 2).unwrap();
        // Survivors: users {0, 1, 4} -> {0, 1, 2}; items {0, 1, 2} stay put.
        assert_eq!(filtered.n_users, 3);
        assert_eq!(filtered.n_items, 3);
        assert_eq!(filtered.interactions.len(), 9);
        assert_eq!(filtered.user_attr, vec![0, 1, 1]);
        assert!(filtered.interactions.iter().all(|i| i.user < 3 && i.item < 3));
    }

    #[test]
    fn idempotent_once_at_fixpoint() {
        let raw = RawDataset {
            n_users: 2,
            n_items: 2,
            user_attr: vec![0, 1],
            interactions: vec![it(0, 0), it(0, 1), it(1, 0), it(1, 1)],
        };
        let once = k_core_filter(&raw, 2, 2).unwrap();
        let twice = k_core_filter(&once, 2, 2).unwrap();
        assert_eq!(once.interactions, twice.interactions);
        assert_eq!(once.user_attr, twice.user_attr);
    }

    #[test]
    fn emptying_the_dataset_is_an_error() {
        let raw = RawDataset {
            n_users: 2,
            n_items: 2,
            user_attr: vec![0, 1],
            interactions: vec![it(0, 0), it(1, 1)],
        };
        assert!(matches!(k_core_filter(&raw, 5, 5), Err(Error::Degenerate(_))));
    }

    /// Runs the published-scale filter when a local MovieLens-1M copy is
    /// available (`DRFO_ML1M_DIR` pointing at the extracted archive).
    #[test]
    #[ignore = "needs a local MovieLens-1M copy; set DRFO_ML1M_DIR"]
    fn ml1m_filter_cardinalities() {
        let dir = std::path::PathBuf::from(
            std::env::var("DRFO_ML1M_DIR").expect("set DRFO_ML1M_DIR to run"),
        );
        let raw = crate::ingest::parse_movielens_files(
            &dir.join("ratings.dat"),
            &dir.join("users.dat"),
        )
        .unwrap();
        let filtered = k_core_filter(&raw, 50, 10).unwrap();
        assert_eq!(filtered.n_items, 3244);
        assert_eq!(filtered.n_users, 4297);
    }
}
