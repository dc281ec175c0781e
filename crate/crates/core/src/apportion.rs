//! Integer splitting of a budget in proportion to weights.

use crate::error::{Error, Result};

/// Largest-remainder (Hamilton) apportionment of `total` seats.
///
/// Quotas and remainders are computed in exact integer arithmetic. Remainder
/// ties go to the smaller `tie_sizes` entry first, then to the lower index.
/// All-zero weights fall back to `tie_sizes` as weights.
pub fn largest_remainder(total: usize, weights: &[u64], tie_sizes: &[usize]) -> Vec<usize> {
    assert_eq!(weights.len(), tie_sizes.len());
    let mut w: Vec<u128> = weights.iter().map(|&x| x as u128).collect();
    let mut sum: u128 = w.iter().sum();
    if sum == 0 {
        w = tie_sizes.iter().map(|&x| x as u128).collect();
        sum = w.iter().sum();
        if sum == 0 {
            assert_eq!(total, 0, "cannot apportion seats over zero weights");
            return vec![0; weights.len()];
        }
    }
    let t = total as u128;
    let mut seats: Vec<usize> = w.iter().map(|&x| (t * x / sum) as usize).collect();
    let remainders: Vec<u128> = w.iter().map(|&x| t * x % sum).collect();
    let leftover = total - seats.iter().sum::<usize>();

    let mut order: Vec<usize> = (0..w.len()).filter(|&g| w[g] > 0).collect();
    order.sort_by(|&a, &b| {
        remainders[b]
            .cmp(&remainders[a])
            .then(tie_sizes[a].cmp(&tie_sizes[b]))
            .then(a.cmp(&b))
    });
    for &g in order.iter().take(leftover) {
        seats[g] += 1;
    }
    seats
}

/// Proportional split with per-group capacity.
///
/// First apportions by `weights`; any seats above a group's cap spill to the
/// groups that still have room, in proportion to their `sizes`, until
/// everything fits.
pub fn apportion_capped(total: usize, weights: &[u64], sizes: &[usize], caps: &[usize]) -> Result<Vec<usize>> {
    let room: usize = caps.iter().sum();
    if total > room {
        return Err(Error::Infeasible(format!(
            "cannot place {total} selections in groups of total capacity {room}"
        )));
    }
    let mut seats = largest_remainder(total, weights, sizes);
    loop {
        let mut excess = 0;
        for (s, &c) in seats.iter_mut().zip(caps) {
            if *s > c {
                excess += *s - c;
                *s = c;
            }
        }
        if excess == 0 {
            return Ok(seats);
        }
        let open: Vec<u64> = seats
            .iter()
            .zip(caps)
            .zip(sizes)
            .map(|((&s, &c), &n)| if s < c { n.max(1) as u64 } else { 0 })
            .collect();
        let spill = largest_remainder(excess, &open, sizes);
        for (s, extra) in seats.iter_mut().zip(spill) {
            *s += extra;
        }
    }
}
