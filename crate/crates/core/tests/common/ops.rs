use motionprop::autodiff::{Graph, NodeId};
use motionprop::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Contracts `y` with a fixed random tensor so every output entry gets a distinct weight.
pub fn weighted_loss(g: &mut Graph, y: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
    let w = uniform(rng, &g.shape(y).to_vec(), -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(y, w).unwrap();
    g.sum_all(p).unwrap()
}

/// One builder per primitive op, each producing a scalar loss over random
/// parameters in [-1, 1].
pub fn primitive_cases() -> Vec<(&'static str, fn(&mut Graph, &mut ChaCha8Rng) -> NodeId)> {
    vec![
        ("matmul", |g, r| {
            let a = g.param("a", uniform(r, &[2, 3, 4], -1.0, 1.0));
            let b = g.param("b", uniform(r, &[4, 5], -1.0, 1.0));
            let y = g.matmul(a, b).unwrap();
            weighted_loss(g, y, r)
        }),
        ("add_broadcast", |g, r| {
            let a = g.param("a", uniform(r, &[3, 2, 4], -1.0, 1.0));
            let b = g.param("b", uniform(r, &[4], -1.0, 1.0));
            let c = g.param("c", uniform(r, &[2, 1], -1.0, 1.0));
            let y = g.add(a, b).unwrap();
            let y = g.add(y, c).unwrap();
            weighted_loss(g, y, r)
        }),
        ("sub", |g, r| {
            let a = g.param("a", uniform(r, &[3, 4], -1.0, 1.0));
            let b = g.param("b", uniform(r, &[1, 4], -1.0, 1.0));
            let y = g.sub(a, b).unwrap();
            weighted_loss(g, y, r)
        }),
        ("mul", |g, r| {
            let a = g.param("a", uniform(r, &[3, 4], -1.0, 1.0));
            let b = g.param("b", uniform(r, &[3, 1], -1.0, 1.0));
            let y = g.mul(a, b).unwrap();
            weighted_loss(g, y, r)
        }),
        ("affine", |g, r| {
            let a = g.param("a", uniform(r, &[5], -1.0, 1.0));
            let y = g.affine(a, -1.5, 0.25).unwrap();
            weighted_loss(g, y, r)
        }),
        ("relu", |g, r| {
            let a = g.param("a", uniform(r, &[4, 3], -1.0, 1.0));
            let y = g.relu(a).unwrap();
            weighted_loss(g, y, r)
        }),
        ("sigmoid", |g, r| {
            let a = g.param("a", uniform(r, &[4, 3], -1.0, 1.0));
            let y = g.sigmoid(a).unwrap();
            weighted_loss(g, y, r)
        }),
        ("tanh", |g, r| {
            let a = g.param("a", uniform(r, &[4, 3], -1.0, 1.0));
            let y = g.tanh(a).unwrap();
            weighted_loss(g, y, r)
        }),
        ("sqrt", |g, r| {
            let a = g.param("a", uniform(r, &[6], 0.1, 1.0));
            let y = g.sqrt(a).unwrap();
            weighted_loss(g, y, r)
        }),
        ("concat", |g, r| {
            let a = g.param("a", uniform(r, &[2, 3, 2], -1.0, 1.0));
            let b = g.param("b", uniform(r, &[2, 1, 2], -1.0, 1.0));
            let y = g.concat(&[a, b, a], 1).unwrap();
            weighted_loss(g, y, r)
        }),
        ("slice", |g, r| {
            let a = g.param("a", uniform(r, &[3, 5, 2], -1.0, 1.0));
            let y = g.slice(a, 1, 1, 3).unwrap();
            weighted_loss(g, y, r)
        }),
        ("reshape", |g, r| {
            let a = g.param("a", uniform(r, &[3, 4], -1.0, 1.0));
            let y = g.reshape(a, &[2, 6]).unwrap();
            weighted_loss(g, y, r)
        }),
        ("mean", |g, r| {
            let a = g.param("a", uniform(r, &[3, 4], -1.0, 1.0));
            let s = g.mul(a, a).unwrap();
            g.mean(s).unwrap()
        }),
        ("sum_trailing", |g, r| {
            let a = g.param("a", uniform(r, &[3, 2, 4], -1.0, 1.0));
            let y = g.sum_trailing(a, 1).unwrap();
            weighted_loss(g, y, r)
        }),
        ("mix_rows", |g, r| {
            let a = g.param("a", uniform(r, &[2, 3, 4], -1.0, 1.0));
            let m = uniform(r, &[3, 3], -1.0, 1.0);
            let y = g.mix_rows(a, m).unwrap();
            weighted_loss(g, y, r)
        }),
        ("conv1d_stride2", |g, r| {
            let x = g.param("x", uniform(r, &[2, 8, 3], -1.0, 1.0));
            let w = g.param("w", uniform(r, &[4, 3, 5], -1.0, 1.0));
            let y = g.conv1d_same(x, w, 2).unwrap();
            weighted_loss(g, y, r)
        }),
        ("conv1d_stride1_asymmetric_pad", |g, r| {
            let x = g.param("x", uniform(r, &[1, 7, 2], -1.0, 1.0));
            let w = g.param("w", uniform(r, &[3, 2, 2], -1.0, 1.0));
            let y = g.conv1d(x, w, 1, 0, 2).unwrap();
            weighted_loss(g, y, r)
        }),
        ("upsample2", |g, r| {
            let x = g.param("x", uniform(r, &[2, 3, 2], -1.0, 1.0));
            let y = g.upsample2(x).unwrap();
            weighted_loss(g, y, r)
        }),
        ("softmax_cross_entropy", |g, r| {
            let x = g.param("x", uniform(r, &[4, 3], -1.0, 1.0));
            g.softmax_cross_entropy(x, &[2, 0, 1, 2]).unwrap()
        }),
        ("squared_error_sum", |g, r| {
            let a = g.param("a", uniform(r, &[3, 4], -1.0, 1.0));
            let b = g.param("b", uniform(r, &[3, 4], -1.0, 1.0));
            g.squared_error_sum(a, b).unwrap()
        }),
    ]
}

