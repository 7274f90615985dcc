use crate::error::{Error, Result};

/// Geometry of a stride-1 convolution over `height x width x channels` images
/// stored in `(y, x, channel)` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(height: usize, width: usize, channels: usize, kernel: usize, padding: bool) -> Result<Self> {
        let pad = if padding { (kernel.saturating_sub(1)) / 2 } else { 0 };
        if kernel == 0 || height + 2 * pad < kernel || width + 2 * pad < kernel {
            return Err(Error::config(
                "kernel",
                format!("kernel {kernel} does not fit a {height}x{width} image with padding {pad}"),
            ));
        }
        Ok(ConvGeometry {
            height,
            width,
            channels,
            kernel,
            pad,
        })
    }

    pub fn out_height(&self) -> usize {
        self.height + 2 * self.pad + 1 - self.kernel
    }

    pub fn out_width(&self) -> usize {
        self.width + 2 * self.pad + 1 - self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// True when the patch at `(oy, ox)` reads no padding.
    pub fn is_interior(&self, oy: usize, ox: usize) -> bool {
        oy >= self.pad
            && ox >= self.pad
            && oy + self.kernel <= self.height + self.pad
            && ox + self.kernel <= self.width + self.pad
    }

    /// Appends every patch of `image` (row-major over output positions, each
    /// patch flattened as `(dy, dx, channel)`) to `out`.
    pub fn extract_into(&self, image: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(image.len(), self.image_len());
        let (k, c, w) = (self.kernel, self.channels, self.width);
        for oy in 0..self.out_height() {
            for ox in 0..self.out_width() {
                for dy in 0..k {
                    let iy = (oy + dy) as isize - self.pad as isize;
                    for dx in 0..k {
                        let ix = (ox + dx) as isize - self.pad as isize;
                        if iy < 0 || ix < 0 || iy as usize >= self.height || ix as usize >= w {
                            out.extend(std::iter::repeat_n(0.0, c));
                        } else {
                            let base = (iy as usize * w + ix as usize) * c;
                            out.extend_from_slice(&image[base..base + c]);
                        }
                    }
                }
            }
        }
    }

    pub fn patches(&self, image: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.positions() * self.patch_len());
        self.extract_into(image, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_single_patch() {
        let g = ConvGeometry::new(4, 4, 1, 2, false).unwrap();
        assert_eq!(g.positions(), 9);
        let g = ConvGeometry::new(3, 3, 1, 3, false).unwrap();
        let img: Vec<f64> = (0..9).map(f64::from).collect();
        assert_eq!(g.patches(&img), img);
    }

    #[test]
    fn padding_zero_fills_border() {
        let g = ConvGeometry::new(2, 2, 1, 3, true).unwrap();
        assert_eq!(g.positions(), 4);
        let p = g.patches(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&p[..9], &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 3.0, 4.0]);
        assert!(!g.is_interior(0, 0));
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        assert!(ConvGeometry::new(2, 2, 1, 3, false).is_err());
    }
}
