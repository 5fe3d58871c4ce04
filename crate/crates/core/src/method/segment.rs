//! Separator-band segmentation.
//!
//! A region is split along bands of near-uniform lines: rows at even depths,
//! columns at odd depths. A line is uniform when the population standard
//! deviation of every color channel along it (within the region) is at most
//! `uniformity_tol`. Only bands strictly inside the region count; cuts go
//! through band centers so the children tile the parent exactly.

use std::collections::VecDeque;

use image::RgbImage;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.w <= self.x + self.w
            && other.y + other.h <= self.y + self.h
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bbox: Rect,
    pub depth: u32,
    pub children: Vec<Region>,
}

impl Region {
    fn leaf(bbox: Rect, depth: u32) -> Self {
        Self {
            bbox,
            depth,
            children: Vec::new(),
        }
    }

    /// Leaves in document order (top to bottom, left to right).
    pub fn leaves(&self) -> Vec<&Region> {
        if self.children.is_empty() {
            return vec![self];
        }
        self.children.iter().flat_map(Region::leaves).collect()
    }

    pub fn leaf_count(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(Region::leaf_count).sum()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub min_band_px: u32,
    pub uniformity_tol: f64,
    pub max_depth: u32,
    pub max_regions: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            min_band_px: 10,
            uniformity_tol: 4.0,
            max_depth: 2,
            max_regions: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub root: Region,
    /// Set when the leaf cap prevented a split.
    pub capped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Columns,
}

impl Axis {
    fn at_depth(depth: u32) -> Self {
        if depth % 2 == 0 { Axis::Rows } else { Axis::Columns }
    }
}

/// Maximum per-channel standard deviation along one line of `rect`.
pub fn line_stddev(img: &RgbImage, rect: Rect, axis: Axis, index: u32) -> f64 {
    let mut sum = [0f64; 3];
    let mut sq = [0f64; 3];
    let n = match axis {
        Axis::Rows => rect.w,
        Axis::Columns => rect.h,
    };
    for i in 0..n {
        let (x, y) = match axis {
            Axis::Rows => (rect.x + i, rect.y + index),
            Axis::Columns => (rect.x + index, rect.y + i),
        };
        let p = img.get_pixel(x, y);
        for c in 0..3 {
            let v = f64::from(p[c]);
            sum[c] += v;
            sq[c] += v * v;
        }
    }
    let n = f64::from(n.max(1));
    (0..3)
        .map(|c| {
            let mean = sum[c] / n;
            (sq[c] / n - mean * mean).max(0.0).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Cut positions (relative to the region start) along `axis`.
pub fn find_cuts(img: &RgbImage, rect: Rect, axis: Axis, params: &SegmentParams) -> Vec<u32> {
    let len = match axis {
        Axis::Rows => rect.h,
        Axis::Columns => rect.w,
    };
    let uniform: Vec<bool> = (0..len)
        .map(|i| line_stddev(img, rect, axis, i) <= params.uniformity_tol)
        .collect();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < len {
        if !uniform[i as usize] {
            i += 1;
            continue;
        }
        let start = i;
        while i < len && uniform[i as usize] {
            i += 1;
        }
        let run = i - start;
        let interior = start > 0 && i < len;
        if interior && run >= params.min_band_px.max(1) {
            cuts.push(start + run / 2);
        }
    }
    cuts
}

fn split(rect: Rect, axis: Axis, cuts: &[u32]) -> Vec<Rect> {
    let len = match axis {
        Axis::Rows => rect.h,
        Axis::Columns => rect.w,
    };
    let mut bounds = vec![0];
    bounds.extend_from_slice(cuts);
    bounds.push(len);
    bounds
        .windows(2)
        .map(|w| match axis {
            Axis::Rows => Rect {
                x: rect.x,
                y: rect.y + w[0],
                w: rect.w,
                h: w[1] - w[0],
            },
            Axis::Columns => Rect {
                x: rect.x + w[0],
                y: rect.y,
                w: w[1] - w[0],
                h: rect.h,
            },
        })
        .collect()
}

/// Segment an image breadth-first. Once the leaf cap would be exceeded no
/// further splits happen and `capped` is set.
pub fn segment(img: &RgbImage, params: &SegmentParams) -> Segmentation {
    let full = Rect {
        x: 0,
        y: 0,
        w: img.width(),
        h: img.height(),
    };
    let mut root = Region::leaf(full, 0);
    if full.w == 0 || full.h == 0 {
        return Segmentation { root, capped: false };
    }
    let max_regions = params.max_regions.max(1);
    let mut leaves = 1usize;
    let mut capped = false;
    // Paths of child indices from the root, visited breadth-first.
    let mut queue: VecDeque<Vec<usize>> = VecDeque::from([Vec::new()]);
    while let Some(path) = queue.pop_front() {
        let node = path.iter().fold(&mut root, |n, &i| &mut n.children[i]);
        if node.depth >= params.max_depth {
            continue;
        }
        if leaves >= max_regions {
            capped = true;
            break;
        }
        let axis = Axis::at_depth(node.depth);
        let cuts = find_cuts(img, node.bbox, axis, params);
        if cuts.is_empty() {
            continue;
        }
        if leaves + cuts.len() > max_regions {
            capped = true;
            break;
        }
        leaves += cuts.len();
        let depth = node.depth + 1;
        node.children = split(node.bbox, axis, &cuts)
            .into_iter()
            .map(|r| Region::leaf(r, depth))
            .collect();
        for i in 0..node.children.len() {
            let mut p = path.clone();
            p.push(i);
            queue.push_back(p);
        }
    }
    Segmentation { root, capped }
}
