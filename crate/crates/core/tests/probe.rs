// quick diagnostic — run as a test with --nocapture
#[test]
fn probe_cvae() {
    use lapo::autodiff::*;
    use lapo::critic::AdvantageWeights;
    use lapo::cvae::{sample_prior, CvaePolicy};
    use lapo::dataset::Batch;
    use lapo::rng::{derive_rng, Domain};
    use ndarray::Array2;
    use rand::Rng;

    let mut init_rng = derive_rng(29, Domain::Init, 0, 0);
    let mut p = CvaePolicy::new(1, 1, 0.1, 2, 0.1, &[32, 32], 3e-3, &mut init_rng).unwrap();

    let n = 64;
    for step in 0..8000u64 {
        let mut rng = derive_rng(30, Domain::TrainStep, step, 0);
        let mut data_rng = derive_rng(30, Domain::Batch, step, 0);
        let mut actions = Array2::zeros((n, 1));
        for i in 0..n {
            let sign = if data_rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
            actions[[i, 0]] = sign * 0.08 + data_rng.random_range(-0.01..0.01);
        }
        let batch = Batch {
            states: Array2::zeros((n, 1)),
            actions,
            rewards: Array2::zeros((n, 1)),
            next_states: Array2::zeros((n, 1)),
            terminal_mask: Array2::zeros((n, 1)),
        };
        let w = AdvantageWeights::ones(n, 0.3, 100.0);
        let (recon, kl) = p.update(&batch, &w, &mut rng).unwrap();
        if step % 1000 == 0 {
            println!("step {step}: recon {recon:.6} kl {kl:.4}");
        }
    }

    // encoder responses for the two modes
    let enc_in = Array2::from_shape_vec((2, 2), vec![0.0, -0.08, 0.0, 0.08]).unwrap();
    let (means, log_stds) = p.encoder().forward_gaussian(&enc_in).unwrap();
    println!("enc mean rows: {means:?}");
    println!("enc log_std rows: {log_stds:?}");

    let mut eval_rng = derive_rng(31, Domain::Histogram, 0, 0);
    let mut samples = vec![];
    for _ in 0..20 {
        let z = sample_prior(2, &mut eval_rng);
        let a = p.decode(&[0.0], &z)[0];
        samples.push((z[0], z[1], a));
    }
    for (z0, z1, a) in samples {
        println!("z=({z0:+.2},{z1:+.2}) -> a={a:+.4}");
    }
}
