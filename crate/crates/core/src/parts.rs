//! Part localization: k-means over support-map pixels, square part masks and crops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::{BoundingBox, Mask, SupportMap};

/// One part location in image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub index: usize,
    pub center_x: usize,
    pub center_y: usize,
    pub side: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Relative objective change below which iteration stops.
    pub tolerance: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 300,
            tolerance: 1e-6,
        }
    }
}

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Point3>,
    pub assignments: Vec<usize>,
    /// Objective after the initial assignment and after every iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap()
    }
}

fn dist2(a: &Point3, b: &Point3) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &Point3, centroids: &[Point3]) -> (usize, f64) {
    let mut best = (0, dist2(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding: the first center uniform, the rest by squared distance.
fn seed_centroids(points: &[Point3], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[pick];
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn objective(points: &[Point3], centroids: &[Point3], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| dist2(p, &centroids[a]))
        .sum()
}

/// Lloyd's k-means with k-means++ seeding driven by `seed`.
///
/// An emptied cluster takes over the point farthest from its centroid.
pub fn kmeans(points: &[Point3], k: usize, seed: u64, options: KMeansOptions) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Infeasible(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = vec![objective(points, &centroids, &assignments)];
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;

        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for d in 0..3 {
                sums[a][d] += p[d];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let donor = (0..points.len())
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| {
                    let da = dist2(&points[a], &centroids[assignments[a]]);
                    let db = dist2(&points[b], &centroids[assignments[b]]);
                    // Prefer the lower index on ties.
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("n >= k leaves a cluster with two or more points");
            let from = assignments[donor];
            counts[from] -= 1;
            for d in 0..3 {
                sums[from][d] -= points[donor][d];
            }
            assignments[donor] = j;
            counts[j] = 1;
            sums[j] = points[donor];
        }
        for j in 0..k {
            let n = counts[j] as f64;
            centroids[j] = [sums[j][0] / n, sums[j][1] / n, sums[j][2] / n];
        }

        let mut changed = false;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let (best, d) = nearest(p, &centroids);
            if best != *a && d < dist2(p, &centroids[*a]) {
                *a = best;
                changed = true;
            }
        }
        let obj = objective(points, &centroids, &assignments);
        let prev = *history.last().unwrap();
        history.push(obj);
        if !changed || (prev - obj).abs() <= options.tolerance * prev.abs() {
            break;
        }
    }

    Ok(KMeansResult {
        centroids,
        assignments,
        objective_history: history,
        iterations,
    })
}

/// Clustering points `(x, y, weight * S(x, y))` for every nonzero pixel, row-major.
pub fn support_points(map: &SupportMap, support_weight: f64) -> Vec<Point3> {
    map.values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(p, &v)| {
            [
                (p % map.width) as f64,
                (p / map.width) as f64,
                v * support_weight,
            ]
        })
        .collect()
}

/// K part centers `(x, y)` from the nonzero support pixels.
pub fn cluster_parts(
    map: &SupportMap,
    k: usize,
    seed: u64,
    support_weight: f64,
    options: KMeansOptions,
) -> Result<Vec<(usize, usize)>> {
    let points = support_points(map, support_weight);
    if k >= 1 && points.len() < k {
        return Err(Error::Infeasible(format!(
            "support map has {} nonzero pixels, fewer than k = {k}",
            points.len()
        )));
    }
    let result = kmeans(&points, k, seed, options)?;
    Ok(result
        .centroids
        .iter()
        .map(|c| {
            let x = (c[0].round().max(0.0) as usize).min(map.width - 1);
            let y = (c[1].round().max(0.0) as usize).min(map.height - 1);
            (x, y)
        })
        .collect())
}

/// Part side `lambda * min(box width, box height)`.
pub fn part_side_length(b: &BoundingBox, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
    }
    if !b.is_valid() {
        return Err(Error::Argument(format!("invalid box {b:?}")));
    }
    Ok(lambda * b.width().min(b.height()) as f64)
}

/// Inclusive index range `{i : |i - center| <= half}` clipped to `0..len`.
fn axis_span(center: usize, half: f64, len: usize) -> Option<(usize, usize)> {
    let lo = (center as f64 - half).ceil().max(0.0);
    let hi = (center as f64 + half).floor().min(len as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Square mask of side `l` centered at `(x, y)`, clipped to the image.
pub fn part_mask(center: (usize, usize), l: f64, img_h: usize, img_w: usize) -> Result<Mask> {
    if l.is_nan() || l <= 0.0 {
        return Err(Error::Argument(format!("part side must be positive, got {l}")));
    }
    let mut cells = vec![false; img_h * img_w];
    let half = l / 2.0;
    if let (Some((x0, x1)), Some((y0, y1))) = (
        axis_span(center.0, half, img_w),
        axis_span(center.1, half, img_h),
    ) {
        for y in y0..=y1 {
            cells[y * img_w + x0..=y * img_w + x1].fill(true);
        }
    }
    Mask::new(img_h, img_w, cells)
}

/// Interleaved `height x width x channels` pixel array.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

/// Keeps pixels under the mask and zeroes the rest, on every channel.
pub fn crop_part<T: Copy + Default>(image: &Raster<T>, mask: &Mask) -> Result<Raster<T>> {
    if image.height != mask.height || image.width != mask.width {
        return Err(Error::Dimension(format!(
            "image {}x{} vs mask {}x{}",
            image.height, image.width, mask.height, mask.width
        )));
    }
    if image.data.len() != image.height * image.width * image.channels {
        return Err(Error::Dimension("image buffer does not match its shape".into()));
    }
    let data = image
        .data
        .chunks_exact(image.channels.max(1))
        .zip(&mask.cells)
        .flat_map(|(px, &keep)| px.iter().map(move |&v| if keep { v } else { T::default() }))
        .collect();
    Ok(Raster {
        data,
        ..image.clone()
    })
}

/// Cluster centers turned into numbered part squares sized from `object_box`.
pub fn locate_parts(
    map: &SupportMap,
    object_box: &BoundingBox,
    k: usize,
    lambda: f64,
    seed: u64,
    support_weight: f64,
) -> Result<Vec<PartSpec>> {
    let side = part_side_length(object_box, lambda)?;
    let centers = cluster_parts(map, k, seed, support_weight, KMeansOptions::default())?;
    Ok(centers
        .into_iter()
        .enumerate()
        .map(|(i, (x, y))| PartSpec {
            index: i + 1,
            center_x: x,
            center_y: y,
            side,
        })
        .collect())
}
