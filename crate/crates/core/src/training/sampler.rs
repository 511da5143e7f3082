use rand::Rng;

use crate::error::{Error, Result};

/// Uniform draw over items the user has not interacted with in training.
/// `interacted` must be sorted and deduplicated. Uses exactly one random
/// draw, mapping the k-th free slot onto its item id.
pub fn sample_negative(
    user: usize,
    rng: &mut impl Rng,
    interacted: &[usize],
    num_items: usize,
) -> Result<usize> {
    let free = num_items.saturating_sub(interacted.len());
    if free == 0 {
        return Err(Error::NoNegative(user));
    }
    let mut item = rng.random_range(0..free);
    for &x in interacted {
        if x <= item {
            item += 1;
        } else {
            break;
        }
    }
    Ok(item)
}
