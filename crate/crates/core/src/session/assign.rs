use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SessionError, Task};
use crate::generation::splitmix64;

/// Fills the image × arm grid so every image ends up with one session per arm.
///
/// Images whose arm counts are uneven are served first, with their
/// least-used arm. Otherwise an untouched image and arm are picked at random.
/// The random stream depends only on the seed and the number of sessions
/// created so far, so a restarted server makes the same choices.
#[derive(Debug, Clone, Copy, Default)]
pub struct BalancedAssigner {
    pub seed: u64,
}

impl BalancedAssigner {
    pub fn new(seed: u64) -> Self {
        BalancedAssigner { seed }
    }

    /// `occupied` lists (task_id, arm) of every session that still holds its
    /// cell (everything not closed). Returns the task index and arm.
    pub fn assign(
        &self,
        pool: &[Task],
        arms: &[String],
        occupied: &[(&str, &str)],
        created_so_far: u64,
    ) -> Result<(usize, String), SessionError> {
        if pool.is_empty() || arms.is_empty() {
            return Err(SessionError::EmptyPool);
        }
        let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
        for &(task, arm) in occupied {
            *counts.entry((task, arm)).or_default() += 1;
        }
        let count = |task: &Task, arm: &String| counts.get(&(task.task_id.as_str(), arm.as_str())).copied().unwrap_or(0);

        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(created_so_far)));

        let uneven: Vec<usize> = (0..pool.len())
            .filter(|&i| {
                let c: Vec<usize> = arms.iter().map(|a| count(&pool[i], a)).collect();
                c.iter().min() != c.iter().max()
            })
            .collect();
        if let Some(&i) = uneven.choose(&mut rng) {
            let min = arms.iter().map(|a| count(&pool[i], a)).min().expect("arms non-empty");
            let deficient: Vec<&String> = arms.iter().filter(|a| count(&pool[i], a) == min).collect();
            let arm = deficient.choose(&mut rng).expect("some arm has the minimum");
            return Ok((i, (*arm).clone()));
        }

        let empty: Vec<usize> = (0..pool.len()).filter(|&i| arms.iter().all(|a| count(&pool[i], a) == 0)).collect();
        if let Some(&i) = empty.choose(&mut rng) {
            let arm = arms.choose(&mut rng).expect("arms non-empty");
            return Ok((i, arm.clone()));
        }
        Err(SessionError::PoolExhausted)
    }
}
