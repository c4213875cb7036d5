use std::collections::HashMap;

use crate::error::{Error, Result};

/// Largest ADO count accepted by [`build_hierarchy`].
pub const MAX_ADOS: u128 = 10_000_000;

const NONE: u32 = u32::MAX;

/// Multi-indices `n` with `Σn ≤ depth` in graded lexicographic order, with
/// links to their `n ± e_m` neighbours.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    n_modes: usize,
    depth: usize,
    indices: Vec<u8>,
    plus: Vec<u32>,
    minus: Vec<u32>,
}

/// `C(depth + n_modes, n_modes)` without overflow for any realistic input.
pub fn ado_count(n_modes: usize, depth: usize) -> u128 {
    let (n, k) = ((depth + n_modes) as u128, n_modes.min(depth) as u128);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub fn build_hierarchy(n_modes: usize, depth: usize) -> Result<Hierarchy> {
    if n_modes == 0 {
        return Err(Error::Parameter("hierarchy needs at least one mode".into()));
    }
    if depth > u8::MAX as usize {
        return Err(Error::Parameter(format!(
            "truncation depth {depth} exceeds 255"
        )));
    }
    let count = ado_count(n_modes, depth);
    if count > MAX_ADOS {
        return Err(Error::MemoryGuard {
            count,
            limit: MAX_ADOS,
        });
    }
    let count = count as usize;
    let mut indices = Vec::with_capacity(count * n_modes);
    let mut current = vec![0u8; n_modes];
    for total in 0..=depth {
        compositions(total, 0, &mut current, &mut indices);
    }
    debug_assert_eq!(indices.len(), count * n_modes);

    let lookup: HashMap<&[u8], u32> = indices
        .chunks_exact(n_modes)
        .enumerate()
        .map(|(i, n)| (n, i as u32))
        .collect();
    let mut plus = vec![NONE; count * n_modes];
    let mut minus = vec![NONE; count * n_modes];
    let mut scratch = vec![0u8; n_modes];
    for (a, n) in indices.chunks_exact(n_modes).enumerate() {
        let level: usize = n.iter().map(|&x| x as usize).sum();
        for m in 0..n_modes {
            scratch.copy_from_slice(n);
            if level < depth {
                scratch[m] += 1;
                plus[a * n_modes + m] = lookup[scratch.as_slice()];
                scratch[m] -= 1;
            }
            if n[m] > 0 {
                scratch[m] -= 1;
                minus[a * n_modes + m] = lookup[scratch.as_slice()];
            }
        }
    }
    Ok(Hierarchy {
        n_modes,
        depth,
        indices,
        plus,
        minus,
    })
}

/// Appends every way of writing `remaining` over positions `pos..`, with
/// earlier positions taking the larger share first.
fn compositions(remaining: usize, pos: usize, current: &mut [u8], out: &mut Vec<u8>) {
    let last = current.len() - 1;
    if pos == last {
        current[pos] = remaining as u8;
        out.extend_from_slice(current);
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v as u8;
        compositions(remaining - v, pos + 1, current, out);
    }
    current[pos] = 0;
}

impl Hierarchy {
    pub fn len(&self) -> usize {
        self.indices.len() / self.n_modes
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn occupations(&self, a: usize) -> &[u8] {
        &self.indices[a * self.n_modes..(a + 1) * self.n_modes]
    }

    pub fn level(&self, a: usize) -> usize {
        self.occupations(a).iter().map(|&x| x as usize).sum()
    }

    pub fn raised(&self, a: usize, m: usize) -> Option<usize> {
        link(self.plus[a * self.n_modes + m])
    }

    pub fn lowered(&self, a: usize, m: usize) -> Option<usize> {
        link(self.minus[a * self.n_modes + m])
    }

    pub fn find(&self, n: &[u8]) -> Option<usize> {
        self.indices.chunks_exact(self.n_modes).position(|x| x == n)
    }
}

fn link(v: u32) -> Option<usize> {
    (v != NONE).then_some(v as usize)
}
