//! Coarse seam localization in image space: dilate each surface mask,
//! intersect every pair, and keep only the cloud points that fall inside
//! the union of those intersections.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PointCloud};
use crate::io::MaskImage;

/// Union of pairwise dilated-mask intersections and the pairs that touched.
#[derive(Debug, Clone, PartialEq)]
pub struct SeamRoi {
    pub roi: MaskImage,
    pub pairs: Vec<(usize, usize)>,
}

/// Pixels within Chebyshev distance `d` of a set pixel (square element of
/// side `2d + 1`, clipped at the border).
pub fn dilate_mask(mask: &MaskImage, d: usize) -> MaskImage {
    if d == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    // separable: a square element is a row pass followed by a column pass
    let mut rows = MaskImage::empty(w, h);
    for v in 0..h {
        let mut last: Option<usize> = None;
        let mut next: Vec<Option<usize>> = vec![None; w];
        for u in (0..w).rev() {
            if mask.get(u, v) {
                last = Some(u);
            }
            next[u] = last;
        }
        let mut prev: Option<usize> = None;
        for u in 0..w {
            if mask.get(u, v) {
                prev = Some(u);
            }
            let near_left = prev.is_some_and(|p| u - p <= d);
            let near_right = next[u].is_some_and(|n| n - u <= d);
            if near_left || near_right {
                rows.set(u, v, true);
            }
        }
    }
    let mut out = MaskImage::empty(w, h);
    for u in 0..w {
        let mut next: Vec<Option<usize>> = vec![None; h];
        let mut last = None;
        for v in (0..h).rev() {
            if rows.get(u, v) {
                last = Some(v);
            }
            next[v] = last;
        }
        let mut prev: Option<usize> = None;
        for v in 0..h {
            if rows.get(u, v) {
                prev = Some(v);
            }
            if prev.is_some_and(|p| v - p <= d) || next[v].is_some_and(|n| n - v <= d) {
                out.set(u, v, true);
            }
        }
    }
    out
}

pub fn build_seam_roi(masks: &[MaskImage], d: usize) -> Result<SeamRoi> {
    if masks.len() < 2 {
        return Err(Error::TooFewMasks(masks.len()));
    }
    let dims = masks[0].dims();
    if let Some(m) = masks.iter().find(|m| m.dims() != dims) {
        return Err(Error::DimensionMismatch(format!(
            "mask sizes differ: {dims:?} vs {:?}",
            m.dims()
        )));
    }
    let dilated: Vec<MaskImage> = masks.iter().map(|m| dilate_mask(m, d)).collect();
    let (w, h) = dims;
    let mut roi = MaskImage::empty(w, h);
    let mut pairs = Vec::new();
    for i in 0..dilated.len() {
        for j in i + 1..dilated.len() {
            let mut touched = false;
            for (k, (a, b)) in dilated[i].data().iter().zip(dilated[j].data()).enumerate() {
                if *a != 0 && *b != 0 {
                    touched = true;
                    roi.set(k % w, k / w, true);
                }
            }
            if touched {
                pairs.push((i, j));
            }
        }
    }
    Ok(SeamRoi { roi, pairs })
}

/// Per-call counts from [`crop_cloud_with_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CropStats {
    pub input: usize,
    pub kept: usize,
    /// Unorganized points behind the camera or projecting outside the image.
    pub out_of_frame: usize,
}

/// Points whose pixel lies inside the ROI, in input order. Organized clouds
/// are indexed directly; unorganized clouds are projected with `intrinsics`.
pub fn crop_cloud(cloud: &PointCloud, roi: &SeamRoi, intrinsics: Option<&CameraIntrinsics>) -> Result<PointCloud> {
    crop_cloud_with_stats(cloud, roi, intrinsics).map(|(c, _)| c)
}

pub fn crop_cloud_with_stats(
    cloud: &PointCloud,
    roi: &SeamRoi,
    intrinsics: Option<&CameraIntrinsics>,
) -> Result<(PointCloud, CropStats)> {
    let (w, h) = roi.roi.dims();
    let mut stats = CropStats {
        input: cloud.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    if let Some(o) = cloud.organization() {
        if (o.cols, o.rows) != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "organized cloud {}x{} vs ROI {}x{} (rows x cols)",
                o.rows, o.cols, h, w
            )));
        }
        for i in cloud.valid_indices() {
            if roi.roi.data()[i] != 0 {
                kept.push(cloud.points()[i]);
            }
        }
    } else {
        let k = intrinsics.ok_or(Error::MissingCorrespondence)?;
        if (k.width, k.height) != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "intrinsics image {}x{} vs ROI {w}x{h}",
                k.width, k.height
            )));
        }
        for p in cloud.points() {
            match k.pixel(p) {
                Some((u, v)) => {
                    if roi.roi.get(u, v) {
                        kept.push(*p);
                    }
                }
                None => stats.out_of_frame += 1,
            }
        }
    }
    stats.kept = kept.len();
    Ok((PointCloud::from_points(kept)?, stats))
}
