use crate::error::{Error, Result};
use crate::models::{ConvGeometry, InputShape};
use crate::numkit::Matrix;

/// Every `kernel x kernel x channels` patch of every image, one per row,
/// ordered by (image, y, x). With `padding` the border patches read zeros.
pub fn extract_patches(inputs: &Matrix, shape: InputShape, kernel: usize, padding: bool) -> Result<Matrix> {
    let geom = image_geometry(shape, kernel, padding)?;
    if inputs.cols() != geom.image_len() {
        return Err(Error::Shape(format!(
            "inputs have {} columns, images need {}",
            inputs.cols(),
            geom.image_len()
        )));
    }
    let mut data = Vec::with_capacity(inputs.rows() * geom.positions() * geom.patch_len());
    for i in 0..inputs.rows() {
        geom.extract_into(inputs.row(i), &mut data);
    }
    Matrix::from_vec(inputs.rows() * geom.positions(), geom.patch_len(), data)
}

pub fn image_geometry(shape: InputShape, kernel: usize, padding: bool) -> Result<ConvGeometry> {
    match shape {
        InputShape::Image {
            height,
            width,
            channels,
        } => ConvGeometry::new(height, width, channels, kernel, padding),
        InputShape::Flat { .. } => Err(Error::config("shape", "patches need image-shaped inputs")),
    }
}

/// Output positions whose window lies inside the image and away from the strip
/// a translation by `(dx, dy)` fills with zeros, so the patch is a shifted copy
/// of a clean patch.
pub fn translation_safe_positions(geom: &ConvGeometry, dx: i64, dy: i64) -> Vec<bool> {
    let (h, w, k, pad) = (geom.height as i64, geom.width as i64, geom.kernel as i64, geom.pad as i64);
    let mut keep = Vec::with_capacity(geom.positions());
    for oy in 0..geom.out_height() as i64 {
        for ox in 0..geom.out_width() as i64 {
            let (y0, x0) = (oy - pad, ox - pad);
            let (y1, x1) = (y0 + k, x0 + k);
            let inside = y0 >= 0 && x0 >= 0 && y1 <= h && x1 <= w;
            let src_inside = y0 - dy >= 0 && x0 - dx >= 0 && y1 - dy <= h && x1 - dx <= w;
            keep.push(inside && src_inside);
        }
    }
    keep
}

/// Rows of a patch matrix (as built by [`extract_patches`]) whose position passes `mask`.
pub fn select_positions(patches: &Matrix, mask: &[bool]) -> Result<Matrix> {
    if mask.is_empty() || !patches.rows().is_multiple_of(mask.len()) {
        return Err(Error::Shape("position mask does not tile the patch rows".into()));
    }
    let rows: Vec<Vec<f64>> = (0..patches.rows())
        .filter(|i| mask[i % mask.len()])
        .map(|i| patches.row(i).to_vec())
        .collect();
    Matrix::from_rows(&rows)
}
