//! Reference implementations and fixture generators shared by the
//! integration and acceptance tests. Each oracle is written from the
//! definition, independently of the library code it checks.
#![allow(dead_code)]

use std::collections::VecDeque;

use olm::localization::{BoundingBox, Connectivity, Mask};
use olm::tensor::FeatureStack;
use rand::seq::SliceRandom;
use rand::Rng;

/// Every nonempty itemset over `0..universe` whose support ratio reaches
/// `alpha`, sorted by size then lexicographically. Items are bits of a mask.
pub fn brute_force_frequent(
    universe: usize,
    transactions: &[Vec<u32>],
    alpha: f64,
) -> Vec<(Vec<u32>, usize)> {
    assert!(universe <= 20);
    let n = transactions.len();
    let tx_masks: Vec<u32> = transactions
        .iter()
        .map(|t| t.iter().fold(0u32, |m, &i| m | (1 << i)))
        .collect();
    let mut out = Vec::new();
    for subset in 1u32..(1 << universe) {
        let count = tx_masks.iter().filter(|&&t| t & subset == subset).count();
        if n > 0 && count as f64 / n as f64 >= alpha {
            let items: Vec<u32> = (0..universe as u32).filter(|i| subset >> i & 1 == 1).collect();
            out.push((items, count));
        }
    }
    out.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Connected components by breadth-first flood fill, as sorted position lists
/// in sorted order (a canonical form of the partition).
pub fn flood_fill_partition(mask: &Mask, connectivity: Connectivity) -> Vec<Vec<usize>> {
    let (h, w) = (mask.height as i64, mask.width as i64);
    let offsets: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ],
    };
    let mut seen = vec![false; mask.cells.len()];
    let mut parts = Vec::new();
    for start in 0..mask.cells.len() {
        if !mask.cells[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut part = Vec::new();
        while let Some(p) = queue.pop_front() {
            part.push(p);
            let (y, x) = (p as i64 / w, p as i64 % w);
            for (dy, dx) in offsets {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h || nx >= w {
                    continue;
                }
                let q = (ny * w + nx) as usize;
                if mask.cells[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        part.sort_unstable();
        parts.push(part);
    }
    parts.sort();
    parts
}

/// IoU by counting pixels on a grid that contains both boxes.
pub fn pixel_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inside = |bx: &BoundingBox, x: usize, y: usize| {
        (bx.x_min..=bx.x_max).contains(&x) && (bx.y_min..=bx.y_max).contains(&y)
    };
    let w = a.x_max.max(b.x_max) + 1;
    let h = a.y_max.max(b.y_max) + 1;
    let (mut inter, mut union) = (0u64, 0u64);
    for y in 0..h {
        for x in 0..w {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    inter as f64 / union as f64
}

pub fn boxed(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> BoundingBox {
    BoundingBox {
        x_min,
        y_min,
        x_max,
        y_max,
        pixel_count: 0,
    }
}

/// Best F-measure over the 256 binarizations `sal >= t`, counted pixel by pixel.
pub fn brute_force_max_f(sal: &[u8], gt: &[bool], beta2: f64) -> f64 {
    let positives = gt.iter().filter(|&&g| g).count() as f64;
    let mut best = 0.0f64;
    for t in 0..=255u8 {
        let (mut tp, mut predicted) = (0u64, 0u64);
        for (&s, &g) in sal.iter().zip(gt) {
            if s >= t {
                predicted += 1;
                tp += g as u64;
            }
        }
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = tp as f64 / positives;
        let denom = beta2 * precision + recall;
        let f = if denom > 0.0 {
            (1.0 + beta2) * precision * recall / denom
        } else {
            0.0
        };
        best = best.max(f);
    }
    best
}

/// Random mask with a per-mask fill density.
pub fn random_mask<R: Rng>(rng: &mut R, h: usize, w: usize) -> Mask {
    let density = rng.gen_range(0.1..0.8);
    let cells = (0..h * w).map(|_| rng.gen_bool(density)).collect();
    Mask::new(h, w, cells).unwrap()
}

/// Stack of non-negative values, roughly a third of them exactly zero.
pub fn random_stack<R: Rng>(rng: &mut R, c: usize, h: usize, w: usize) -> FeatureStack {
    let data = (0..c * h * w)
        .map(|_| if rng.gen_bool(0.35) { 0.0 } else { rng.gen_range(0.0f32..50.0) })
        .collect();
    FeatureStack::new("rand", c, h, w, data).unwrap()
}

/// A planted rectangle on a square grid, inclusive grid coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Planted {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Planted {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }

    /// The rectangle's pixel footprint after upsampling by `factor`.
    pub fn scaled(&self, factor: usize) -> BoundingBox {
        boxed(
            self.x0 * factor,
            self.y0 * factor,
            self.x1 * factor + factor - 1,
            self.y1 * factor + factor - 1,
        )
    }
}

/// Picks a rectangle covering `min_frac..=max_frac` of a `side x side` grid.
pub fn random_rectangle<R: Rng>(rng: &mut R, side: usize, min_frac: f64, max_frac: f64) -> Planted {
    let total = (side * side) as f64;
    loop {
        let w = rng.gen_range(1..=side);
        let h = rng.gen_range(1..=side);
        let frac = (w * h) as f64 / total;
        if frac >= min_frac && frac <= max_frac {
            let x0 = rng.gen_range(0..=side - w);
            let y0 = rng.gen_range(0..=side - h);
            return Planted {
                x0,
                y0,
                x1: x0 + w - 1,
                y1: y0 + h - 1,
            };
        }
    }
}

/// Synthetic activations with a planted object.
///
/// Quiet positions hold small noise in `[0, 0.01)` or zero. A fixed share of
/// channels (`object_frac`) fire at 3.0 over the rectangle. Every background
/// position fires at 3.0 in exactly `background_hits` randomly chosen
/// channels. Firing values sit well above each channel's mean of positives.
pub fn planted_stack<R: Rng>(
    rng: &mut R,
    channels: usize,
    side: usize,
    rect: Planted,
    object_frac: f64,
    background_hits: usize,
) -> Vec<f32> {
    let plane = side * side;
    let mut data: Vec<f32> = (0..channels * plane)
        .map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0f32..0.01) })
        .collect();
    let mut order: Vec<usize> = (0..channels).collect();
    order.shuffle(rng);
    let object_channels = (object_frac * channels as f64).round() as usize;
    for &c in &order[..object_channels] {
        for y in rect.y0..=rect.y1 {
            for x in rect.x0..=rect.x1 {
                data[c * plane + y * side + x] = 3.0;
            }
        }
    }
    for y in 0..side {
        for x in 0..side {
            if rect.contains(x, y) {
                continue;
            }
            for &c in order.choose_multiple(rng, background_hits) {
                data[c * plane + y * side + x] = 3.0;
            }
        }
    }
    data
}
