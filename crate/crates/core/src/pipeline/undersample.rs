use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::AnnotatedPost;
use super::targets::derive_targets;
use crate::error::{Error, Result};
use crate::task::{Task, TaskKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Undersampled {
    pub posts: Vec<AnnotatedPost>,
    pub removed: usize,
    /// Set when nothing could be done (target class absent or alone).
    pub warning: Option<String>,
}

/// Randomly drops posts of `target_class` (by hard label) until it is no
/// larger than the next largest class. Survivors keep their order.
pub fn undersample(posts: Vec<AnnotatedPost>, task: Task, target_class: usize, seed: u64) -> Result<Undersampled> {
    if task.kind() == TaskKind::Multilabel {
        return Err(Error::Config(format!("undersampling needs a single-label task, got {task}")));
    }
    if target_class >= task.arity() {
        return Err(Error::Config(format!("class index {target_class} out of range for task {task}")));
    }
    let classes = posts
        .iter()
        .map(|p| derive_targets(p, task).map(|t| t.hard.class().expect("single-label task")))
        .collect::<Result<Vec<_>>>()?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in &classes {
        *counts.entry(c).or_default() += 1;
    }
    let name = task.labels()[target_class];
    let no_op = |posts, message: String| {
        log::warn!("{message}");
        Ok(Undersampled {
            posts,
            removed: 0,
            warning: Some(message),
        })
    };
    let Some(&target_count) = counts.get(&target_class) else {
        return no_op(posts, format!("undersampling skipped: class {name} is absent"));
    };
    let cap = counts
        .iter()
        .filter(|(&c, _)| c != target_class)
        .map(|(_, &n)| n)
        .max()
        .unwrap_or(0);
    if cap == 0 {
        return no_op(posts, format!("undersampling skipped: {name} is the only class present"));
    }
    if target_count <= cap {
        return Ok(Undersampled {
            posts,
            removed: 0,
            warning: None,
        });
    }
    let target_positions: Vec<usize> = (0..posts.len()).filter(|&i| classes[i] == target_class).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; posts.len()];
    for &i in &target_positions {
        keep[i] = false;
    }
    for k in rand::seq::index::sample(&mut rng, target_positions.len(), cap) {
        keep[target_positions[k]] = true;
    }
    let survivors: Vec<AnnotatedPost> = posts
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    Ok(Undersampled {
        removed: target_count - cap,
        posts: survivors,
        warning: None,
    })
}
