use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Refuse exact enumeration beyond this many groups.
pub const MAX_ENUMERATED_GROUPS: u128 = 1_000_000;

/// An ordered tuple of slot indices. Position within the tuple matters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Group {
    pub indices: Vec<usize>,
}

impl Group {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupOrigin {
    /// Every ordered m-tuple of distinct slots.
    Full,
    /// Circular windows over one shuffle of the slots.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSet {
    pub groups: Vec<Group>,
    pub origin: GroupOrigin,
}

impl GroupSet {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group_size(&self) -> usize {
        self.groups.first().map_or(0, Group::len)
    }

    /// Re-expresses groups over `0..slots.len()` as groups over the given slot indices.
    pub fn map_slots(mut self, slots: &[usize]) -> Self {
        for g in &mut self.groups {
            g.indices.iter_mut().for_each(|i| *i = slots[*i]);
        }
        self
    }

    /// How many times each of `n` slots occurs across all groups.
    pub fn occurrence_counts(&self, n: usize) -> Vec<usize> {
        let mut counts = vec![0usize; n];
        for g in &self.groups {
            for &i in &g.indices {
                counts[i] += 1;
            }
        }
        counts
    }

    /// `counts[slot][position]`.
    pub fn position_counts(&self, n: usize) -> Vec<Vec<usize>> {
        let m = self.group_size();
        let mut counts = vec![vec![0usize; m]; n];
        for g in &self.groups {
            for (p, &i) in g.indices.iter().enumerate() {
                counts[i][p] += 1;
            }
        }
        counts
    }
}

/// `n!/(n−m)!`, saturating.
pub fn permutation_count(n: usize, m: usize) -> u128 {
    if m > n {
        return 0;
    }
    ((n - m + 1)..=n).fold(1u128, |acc, k| acc.saturating_mul(k as u128))
}

fn check_size(n_valid: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("group size must be at least 1"));
    }
    if m > n_valid {
        return Err(Error::GroupTooLarge { m, n: n_valid });
    }
    Ok(())
}

/// All ordered m-tuples of distinct indices in `0..n_valid`, lexicographic.
pub fn enumerate_groups(n_valid: usize, m: usize) -> Result<GroupSet> {
    check_size(n_valid, m)?;
    let total = permutation_count(n_valid, m);
    if total > MAX_ENUMERATED_GROUPS {
        return Err(Error::EnumerationTooLarge {
            groups: total,
            limit: MAX_ENUMERATED_GROUPS,
        });
    }
    let mut groups = Vec::with_capacity(total as usize);
    let mut current = Vec::with_capacity(m);
    let mut used = vec![false; n_valid];
    fn extend(m: usize, current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Group>) {
        if current.len() == m {
            out.push(Group::new(current.clone()));
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                current.push(i);
                extend(m, current, used, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    extend(m, &mut current, &mut used, &mut groups);
    Ok(GroupSet {
        groups,
        origin: GroupOrigin::Full,
    })
}

/// The `n` length-`m` circular windows over `order`. When `m > n` windows wrap more than
/// once and repeat slots; every slot still occurs exactly once per position.
pub fn circular_windows(order: &[usize], m: usize) -> GroupSet {
    let n = order.len();
    let groups = (0..n)
        .map(|start| Group::new((0..m).map(|k| order[(start + k) % n]).collect()))
        .collect();
    GroupSet {
        groups,
        origin: GroupOrigin::Sampled,
    }
}

/// Shuffles `0..n_valid` once and takes its `n_valid` circular windows of length `m`.
pub fn sample_groups<R: Rng + ?Sized>(n_valid: usize, m: usize, rng: &mut R) -> Result<GroupSet> {
    check_size(n_valid, m)?;
    Ok(sample_groups_wrapping(n_valid, m, rng))
}

/// Like [`sample_groups`] but accepts `m > n_valid`, repeating slots within a group.
pub fn sample_groups_wrapping<R: Rng + ?Sized>(n_valid: usize, m: usize, rng: &mut R) -> GroupSet {
    let mut order: Vec<usize> = (0..n_valid).collect();
    order.shuffle(rng);
    circular_windows(&order, m)
}
