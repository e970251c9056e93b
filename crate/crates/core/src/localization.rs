//! Support maps, connected components and bounding boxes.
//!
//! Frequent grid positions are grouped into spatially connected components.
//! The kept component(s) carry their support ratios into a grid-scale
//! [`SupportMap`], which is upsampled to image resolution for box extraction,
//! saliency and part clustering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::miner::{check_alpha, FrequencyGrid};
use crate::tensor::resize_plane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight neighbours.
    #[default]
    Eight,
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::Argument(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keep {
    #[default]
    Largest,
    All,
}

/// Row-major binary grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask {height}x{width} needs {} cells, got {}",
                height * width,
                cells.len()
            )));
        }
        Ok(Mask { height, width, cells })
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// A maximal connected set of marked positions, ascending row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub positions: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn min_position(&self) -> usize {
        self.positions[0]
    }

    /// Tight inclusive box in a grid of the given width.
    pub fn bounding_box(&self, width: usize) -> BoundingBox {
        let (mut x_min, mut y_min) = (usize::MAX, usize::MAX);
        let (mut x_max, mut y_max) = (0, 0);
        for &p in &self.positions {
            let (y, x) = (p / width, p % width);
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
            pixel_count: self.positions.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Grid,
    Image,
}

/// Per-position support values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub scale: Scale,
}

impl SupportMap {
    pub fn nonzero_mask(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            cells: self.values.iter().map(|&v| v > 0.0).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v <= 0.0)
    }
}

/// Inclusive pixel box. `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
    #[serde(default)]
    pub pixel_count: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_valid(&self) -> bool {
        self.x_min <= self.x_max && self.y_min <= self.y_max
    }
}

/// Marks positions whose support ratio is at least `alpha`.
pub fn select_frequent_positions(grid: &FrequencyGrid, alpha: f64) -> Result<Mask> {
    check_alpha(alpha)?;
    let cells = (0..grid.counts.len())
        .map(|p| grid.is_frequent(p, alpha))
        .collect();
    Mask::new(grid.grid_h, grid.grid_w, cells)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    // Smaller index becomes the root so roots are component minima.
    match ra.cmp(&rb) {
        std::cmp::Ordering::Less => parent[rb] = ra,
        std::cmp::Ordering::Greater => parent[ra] = rb,
        std::cmp::Ordering::Equal => {}
    }
}

/// Labels connected marked positions.
///
/// Components are sorted by size descending, ties broken by the smaller
/// minimum position.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Vec<Component> {
    let (h, w) = (mask.height, mask.width);
    let mut parent: Vec<usize> = (0..h * w).collect();
    // Raster scan: only neighbours already visited need to be joined.
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !mask.cells[p] {
                continue;
            }
            if x > 0 && mask.cells[p - 1] {
                union(&mut parent, p, p - 1);
            }
            if y > 0 {
                let up = p - w;
                if mask.cells[up] {
                    union(&mut parent, p, up);
                }
                if connectivity == Connectivity::Eight {
                    if x > 0 && mask.cells[up - 1] {
                        union(&mut parent, p, up - 1);
                    }
                    if x + 1 < w && mask.cells[up + 1] {
                        union(&mut parent, p, up + 1);
                    }
                }
            }
        }
    }

    let mut slot = vec![usize::MAX; h * w];
    let mut components: Vec<Component> = Vec::new();
    for p in 0..h * w {
        if !mask.cells[p] {
            continue;
        }
        let root = find(&mut parent, p);
        if slot[root] == usize::MAX {
            slot[root] = components.len();
            components.push(Component { positions: Vec::new() });
        }
        components[slot[root]].positions.push(p);
    }
    // Components were created in order of their minimum position; the stable
    // sort keeps that order among equal sizes.
    components.sort_by_key(|c| std::cmp::Reverse(c.len()));
    components
}

/// Restricts the ratio grid to the kept components.
pub fn build_support_map(
    grid: &FrequencyGrid,
    components: &[Component],
    keep: Keep,
) -> Result<SupportMap> {
    let n = grid.counts.len();
    if let Some(bad) = components
        .iter()
        .flat_map(|c| c.positions.iter())
        .find(|&&p| p >= n)
    {
        return Err(Error::Dimension(format!(
            "component position {bad} outside {}x{} grid",
            grid.grid_h, grid.grid_w
        )));
    }
    let kept: Vec<&Component> = match keep {
        Keep::All => components.iter().filter(|c| !c.is_empty()).collect(),
        Keep::Largest => components
            .iter()
            .filter(|c| !c.is_empty())
            .min_by(|a, b| b.len().cmp(&a.len()).then(a.min_position().cmp(&b.min_position())))
            .into_iter()
            .collect(),
    };
    if kept.is_empty() {
        return Err(Error::NoObjectFound);
    }
    let mut values = vec![0.0; n];
    for c in kept {
        for &p in &c.positions {
            values[p] = grid.ratio(p);
        }
    }
    Ok(SupportMap {
        height: grid.grid_h,
        width: grid.grid_w,
        values,
        scale: Scale::Grid,
    })
}

/// Source cell nearest to each destination index along one axis.
fn nearest_cells(src_len: usize, dst_len: usize) -> Vec<usize> {
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize;
            s.min(src_len - 1)
        })
        .collect()
}

/// Bilinear upsampling of a grid-scale map to `img_h x img_w`.
///
/// Pixels whose nearest grid cell carries no support are zeroed, so the
/// image-scale nonzero region is exactly the footprint of the kept cells.
pub fn upsample_support(map: &SupportMap, img_h: usize, img_w: usize) -> Result<SupportMap> {
    if map.scale != Scale::Grid {
        return Err(Error::Argument("support map is already at image scale".into()));
    }
    if img_h == 0 || img_w == 0 {
        return Err(Error::Argument(format!("image size must be at least 1x1, got {img_h}x{img_w}")));
    }
    let mut values = resize_plane(&map.values, map.height, map.width, img_h, img_w);
    let rows = nearest_cells(map.height, img_h);
    let cols = nearest_cells(map.width, img_w);
    for (y, &cy) in rows.iter().enumerate() {
        for (x, &cx) in cols.iter().enumerate() {
            if map.values[cy * map.width + cx] <= 0.0 {
                values[y * img_w + x] = 0.0;
            }
        }
    }
    Ok(SupportMap {
        height: img_h,
        width: img_w,
        values,
        scale: Scale::Image,
    })
}

/// One box per connected nonzero region, largest first.
pub fn extract_boxes_multi(
    map: &SupportMap,
    connectivity: Connectivity,
    max_boxes: Option<usize>,
) -> Vec<BoundingBox> {
    let mut boxes: Vec<BoundingBox> = connected_components(&map.nonzero_mask(), connectivity)
        .iter()
        .map(|c| c.bounding_box(map.width))
        .collect();
    if let Some(max) = max_boxes {
        boxes.truncate(max);
    }
    boxes
}

/// Box around the largest connected nonzero region.
pub fn extract_box_single(map: &SupportMap, connectivity: Connectivity) -> Result<BoundingBox> {
    extract_boxes_multi(map, connectivity, Some(1))
        .into_iter()
        .next()
        .ok_or(Error::NoObjectFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        let cells = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Mask::new(h, w, cells).unwrap()
    }

    fn grid(h: usize, w: usize, n: usize, counts: Vec<u32>) -> FrequencyGrid {
        FrequencyGrid {
            grid_h: h,
            grid_w: w,
            transaction_count: n,
            counts,
        }
    }

    fn image_map(h: usize, w: usize, values: Vec<f64>) -> SupportMap {
        SupportMap {
            height: h,
            width: w,
            values,
            scale: Scale::Image,
        }
    }

    #[test]
    fn selection_threshold() {
        let g = grid(1, 4, 10, vec![0, 1, 5, 10]);
        assert_eq!(select_frequent_positions(&g, 0.1).unwrap().cells, vec![false, true, true, true]);
        let uniform = grid(1, 3, 10, vec![5, 5, 5]);
        assert_eq!(select_frequent_positions(&uniform, 0.6).unwrap().count(), 0);
        assert!(select_frequent_positions(&g, 1.0 + 1e-9).is_err());
    }

    #[test]
    fn single_pixel_component() {
        let cc = connected_components(&mask(&["...", ".#.", "..."]), Connectivity::Four);
        assert_eq!(cc, vec![Component { positions: vec![4] }]);
    }

    #[test]
    fn diagonal_connectivity() {
        let m = mask(&["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Four).len(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
    }

    #[test]
    fn anti_diagonal_joins_under_eight() {
        let m = mask(&[".#", "#."]);
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
    }

    #[test]
    fn u_shape_merges_late() {
        let m = mask(&["#.#", "#.#", "###"]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].len(), 7);
    }

    #[test]
    fn components_sorted_by_size_then_position() {
        let m = mask(&["#..##", "...##", "#...."]);
        let cc = connected_components(&m, Connectivity::Eight);
        assert_eq!(cc.len(), 3);
        assert_eq!(cc[0].positions, vec![3, 4, 8, 9]);
        assert_eq!(cc[1].positions, vec![0]);
        assert_eq!(cc[2].positions, vec![10]);
    }

    #[test]
    fn support_map_whole_grid() {
        let g = grid(2, 2, 4, vec![1, 2, 3, 4]);
        let cc = connected_components(&mask(&["##", "##"]), Connectivity::Eight);
        let s = build_support_map(&g, &cc, Keep::Largest).unwrap();
        assert_eq!(s.values, g.ratios());
    }

    #[test]
    fn keep_largest_zeroes_smaller() {
        let g = grid(2, 5, 10, vec![3; 10]);
        // sizes 5 and 3
        let m = mask(&["###.#", "##..#"]);
        let cc = connected_components(&m, Connectivity::Four);
        let s = build_support_map(&g, &cc, Keep::Largest).unwrap();
        assert_eq!(s.values, vec![0.3, 0.3, 0.3, 0.0, 0.0, 0.3, 0.3, 0.0, 0.0, 0.0]);
        let all = build_support_map(&g, &cc, Keep::All).unwrap();
        for p in 0..10 {
            let expected = if m.cells[p] { 0.3 } else { 0.0 };
            assert_eq!(all.values[p], expected);
        }
    }

    #[test]
    fn empty_components_mean_no_object() {
        let g = grid(1, 2, 1, vec![0, 0]);
        assert!(matches!(build_support_map(&g, &[], Keep::All), Err(Error::NoObjectFound)));
    }

    #[test]
    fn box_of_rectangle() {
        let (h, w) = (32, 32);
        let mut v = vec![0.0; h * w];
        for y in 10..=19 {
            for x in 5..=24 {
                v[y * w + x] = 0.5;
            }
        }
        let b = extract_box_single(&image_map(h, w, v), Connectivity::Eight).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (5, 10, 24, 19));
        assert_eq!(b.pixel_count, 200);
    }

    #[test]
    fn box_picks_larger_blob() {
        let (h, w) = (40, 40);
        let mut v = vec![0.0; h * w];
        for y in 0..10 {
            for x in 0..10 {
                v[y * w + x] = 0.1;
            }
        }
        for y in 30..34 {
            for x in 30..35 {
                v[y * w + x] = 0.9;
            }
        }
        let b = extract_box_single(&image_map(h, w, v), Connectivity::Eight).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max, b.pixel_count), (0, 0, 9, 9, 100));
    }

    #[test]
    fn single_pixel_box() {
        let mut v = vec![0.0; 100];
        v[7 * 10 + 3] = 0.2;
        let b = extract_box_single(&image_map(10, 10, v), Connectivity::Eight).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (3, 7, 3, 7));
    }

    #[test]
    fn all_zero_map_has_no_object() {
        let m = image_map(4, 4, vec![0.0; 16]);
        assert!(matches!(extract_box_single(&m, Connectivity::Eight), Err(Error::NoObjectFound)));
        assert!(extract_boxes_multi(&m, Connectivity::Eight, None).is_empty());
    }

    #[test]
    fn multi_box_truncation() {
        let (h, w) = (20, 20);
        let mut v = vec![0.0; h * w];
        let mut fill = |y0: usize, x0: usize, s: usize| {
            for y in y0..y0 + s {
                for x in x0..x0 + s {
                    v[y * w + x] = 1.0;
                }
            }
        };
        fill(0, 0, 2);
        fill(5, 5, 4);
        fill(12, 12, 3);
        let m = image_map(h, w, v);
        let all = extract_boxes_multi(&m, Connectivity::Eight, None);
        assert_eq!(all.iter().map(|b| b.pixel_count).collect::<Vec<_>>(), vec![16, 9, 4]);
        let two = extract_boxes_multi(&m, Connectivity::Eight, Some(2));
        assert_eq!(two, all[..2].to_vec());
    }

    #[test]
    fn upsample_constant_and_identity() {
        let m = SupportMap {
            height: 3,
            width: 4,
            values: vec![0.25; 12],
            scale: Scale::Grid,
        };
        let up = upsample_support(&m, 48, 64).unwrap();
        assert_eq!(up.scale, Scale::Image);
        assert!(up.values.iter().all(|v| (v - 0.25).abs() < 1e-6));

        let vals: Vec<f64> = (0..12).map(|i| i as f64 / 20.0).collect();
        let m = SupportMap { values: vals.clone(), ..m };
        let same = upsample_support(&m, 3, 4).unwrap();
        for (a, b) in same.values.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn upsample_footprint_is_exact() {
        // 2x3 block at rows 1..=2, cols 1..=3 of a 5x6 grid, scale 16.
        let mut vals = vec![0.0; 30];
        for y in 1..=2 {
            for x in 1..=3 {
                vals[y * 6 + x] = 0.4;
            }
        }
        let m = SupportMap {
            height: 5,
            width: 6,
            values: vals,
            scale: Scale::Grid,
        };
        let up = upsample_support(&m, 80, 96).unwrap();
        let b = extract_box_single(&up, Connectivity::Eight).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (16, 16, 63, 47));
        assert_eq!(b.pixel_count, 48 * 32);
        assert!(up.values.iter().all(|&v| (0.0..=0.4).contains(&v)));
    }

    #[test]
    fn upsample_rejects_image_scale() {
        let m = image_map(2, 2, vec![0.0; 4]);
        assert!(upsample_support(&m, 4, 4).is_err());
    }
}
