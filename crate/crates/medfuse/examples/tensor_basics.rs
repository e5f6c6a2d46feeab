//! Tour of the tensor primitives: construction, matmul, element-wise ops,
//! softmax, reductions, and the deterministic RNG.
//!
//! Run with: `cargo run --example tensor_basics`

use medfuse::tensor::{Reduce, Shape, Tensor, Unary};

fn main() -> medfuse::Result<()> {
    // Constant fill and shape metadata.
    let zeros = Tensor::full(Shape::new(&[2, 3])?, 0.0);
    println!("zeros [2,3]: {:?}", zeros.data());

    // Deterministic normal draws: same (shape, seed, std) => same bits.
    let a = Tensor::rng_normal(Shape::new(&[4])?, 7, 1.0)?;
    let b = Tensor::rng_normal(Shape::new(&[4])?, 7, 1.0)?;
    assert_eq!(a.data(), b.data());
    println!("rng_normal(seed=7): {:?}", a.data());

    // Matrix product.
    let m = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0])?;
    let v = Tensor::from_vec(&[2, 2], vec![0.0, 1.0, 1.0, 0.0])?;
    println!("matmul swap columns: {:?}", m.matmul(&v)?.data());

    // Element-wise with trailing-axis broadcast.
    let bias = Tensor::from_vec(&[2], vec![10.0, 20.0])?;
    println!("row bias: {:?}", m.add(&bias)?.data());

    // Activations.
    let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0])?;
    println!("relu: {:?}", x.map(Unary::Relu).data());
    println!("sigmoid: {:?}", x.map(Unary::Sigmoid).data());

    // Softmax along an axis sums to one per slice.
    let s = Tensor::from_vec(&[3], vec![1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()])?.softmax(0)?;
    println!("softmax(ln 1, ln 2, ln 3) = {:?} (sums to {})", s.data(), s.sum());

    // Reductions; argmax ties resolve to the lowest index.
    println!("row sums: {:?}", m.reduce(Reduce::Sum, 1)?.data());
    let t = Tensor::from_vec(&[3], vec![5.0, 5.0, 1.0])?;
    println!("argmax([5,5,1]) = {}", t.argmax1());
    Ok(())
}
