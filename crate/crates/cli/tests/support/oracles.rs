//! Brute-force references the library is checked against. Nothing here
//! calls into the library's own algorithms.

#![allow(dead_code)]

use std::collections::VecDeque;

/// Dense index for every sequence over `k` symbols with length <= `max_len`.
pub struct SeqSpace {
    k: usize,
    offsets: Vec<usize>,
}

impl SeqSpace {
    pub fn new(k: usize, max_len: usize) -> Self {
        let mut offsets = vec![0];
        for len in 0..=max_len {
            offsets.push(offsets[len] + k.pow(len as u32));
        }
        Self { k, offsets }
    }

    pub fn size(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn max_len(&self) -> usize {
        self.offsets.len() - 2
    }

    pub fn index(&self, seq: &[u8]) -> usize {
        let code = seq.iter().fold(0, |acc, &s| acc * self.k + s as usize);
        self.offsets[seq.len()] + code
    }

    pub fn decode(&self, idx: usize) -> Vec<u8> {
        let len = self.offsets.iter().rposition(|&o| o <= idx).unwrap();
        let mut code = idx - self.offsets[len];
        let mut seq = vec![0u8; len];
        for slot in seq.iter_mut().rev() {
            *slot = (code % self.k) as u8;
            code /= self.k;
        }
        seq
    }
}

/// Minimum number of single-element insertions and deletions from `source`
/// to every sequence in `space`, by breadth-first search over the space.
pub fn edit_distances(space: &SeqSpace, source: &[u8]) -> Vec<u8> {
    let mut dist = vec![u8::MAX; space.size()];
    let mut queue = VecDeque::new();
    let start = space.index(source);
    dist[start] = 0;
    queue.push_back(start);
    while let Some(cur) = queue.pop_front() {
        let seq = space.decode(cur);
        let d = dist[cur] + 1;
        let mut visit = |next: Vec<u8>, queue: &mut VecDeque<usize>| {
            let i = space.index(&next);
            if dist[i] == u8::MAX {
                dist[i] = d;
                queue.push_back(i);
            }
        };
        for pos in 0..seq.len() {
            let mut next = seq.clone();
            next.remove(pos);
            visit(next, &mut queue);
        }
        if seq.len() < space.max_len() {
            for pos in 0..=seq.len() {
                for sym in 0..space.k as u8 {
                    let mut next = seq.clone();
                    next.insert(pos, sym);
                    visit(next, &mut queue);
                }
            }
        }
    }
    dist
}

/// All sequences over `k` symbols with length in `lens`.
pub fn all_sequences(k: u8, lens: std::ops::RangeInclusive<usize>) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for len in lens {
        for mut code in 0..(k as usize).pow(len as u32) {
            let mut seq = vec![0u8; len];
            for slot in seq.iter_mut().rev() {
                *slot = (code % k as usize) as u8;
                code /= k as usize;
            }
            out.push(seq);
        }
    }
    out
}

/// Longest common subsequence length by exhaustive subsequence search.
pub fn lcs_bruteforce<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let n = a.len();
    assert!(n <= 16, "bruteforce LCS is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let picked: Vec<&T> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if picked.len() <= best {
            continue;
        }
        let mut it = b.iter();
        if picked.iter().all(|x| it.any(|y| y == *x)) {
            best = picked.len();
        }
    }
    best
}
