use crate::linalg::Tensor;

/// Normalized mean gradient magnitude of one image in `[0, 1]`.
///
/// Channels are averaged to luma; at each pixel with a right and a lower
/// neighbour the forward differences give `sqrt(dx^2 + dy^2)`. The mean is
/// divided by `sqrt(2)`, the value of a full-contrast checkerboard.
/// Accepts `h x w`, `c x h x w` or `1 x c x h x w`.
pub fn sharpness(image: &Tensor) -> f32 {
    let (c, h, w) = match *image.shape() {
        [h, w] => (1, h, w),
        [c, h, w] | [1, c, h, w] => (c, h, w),
        _ => panic!("sharpness takes a single image, got shape {:?}", image.shape()),
    };
    sharpness_raw(image.data(), c, h, w)
}

/// Per-image sharpness of an `n x c x h x w` batch.
pub fn sharpness_batch(images: &Tensor) -> Vec<f32> {
    let [_, c, h, w] = match *images.shape() {
        [n, c, h, w] => [n, c, h, w],
        _ => panic!("expected n x c x h x w, got {:?}", images.shape()),
    };
    images
        .data()
        .chunks_exact(c * h * w)
        .map(|img| sharpness_raw(img, c, h, w))
        .collect()
}

pub(crate) fn sharpness_raw(img: &[f32], c: usize, h: usize, w: usize) -> f32 {
    if h < 2 || w < 2 {
        return 0.0;
    }
    let plane = h * w;
    let luma: Vec<f64> = (0..plane)
        .map(|p| (0..c).map(|ch| f64::from(img[ch * plane + p])).sum::<f64>() / c as f64)
        .collect();
    let mut total = 0.0f64;
    for i in 0..h - 1 {
        for j in 0..w - 1 {
            let v = luma[i * w + j];
            let dx = luma[i * w + j + 1] - v;
            let dy = luma[(i + 1) * w + j] - v;
            total += (dx * dx + dy * dy).sqrt();
        }
    }
    let mean = total / ((h - 1) * (w - 1)) as f64;
    ((mean / std::f64::consts::SQRT_2) as f32).clamp(0.0, 1.0)
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f32]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = values.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
