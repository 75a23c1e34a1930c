//! Runs alone in its own binary: the detach setting is per-thread and
//! fixed by the first backward pass.

use candle_core::{Device, Tensor, Var};
use mugan_core::layers::enable_higher_order_grads;
use mugan_core::losses::gradient_penalty;

fn penalty() -> mugan_core::Result<Tensor> {
    let w = Var::new(&[[0.5f64], [-1.0], [2.0]], &Device::Cpu)?;
    let real = Tensor::new(&[[1f64, 2.0, 3.0], [0.5, -1.0, 0.0]], &Device::Cpu)?;
    let fake = Tensor::new(&[[0f64, 1.0, -2.0], [1.0, 1.0, 1.0]], &Device::Cpu)?;
    let mix = Tensor::new(&[0.25f64, 0.75], &Device::Cpu)?;
    gradient_penalty(|x| Ok(x.matmul(w.as_tensor())?.tanh()?.squeeze(1)?), &real, &fake, &mix)
}

#[test]
fn penalty_refuses_threads_with_detached_gradients() {
    let stale = std::thread::spawn(|| {
        let x = Var::new(&[1.0f64], &Device::Cpu).unwrap();
        x.sqr().unwrap().sum_all().unwrap().backward().unwrap();
        enable_higher_order_grads();
        penalty()
    })
    .join()
    .unwrap();
    assert!(matches!(stale, Err(mugan_core::Error::Config(_))), "{stale:?}");

    let fresh = std::thread::spawn(penalty).join().unwrap();
    assert!(fresh.unwrap().to_scalar::<f64>().unwrap().is_finite());
}
