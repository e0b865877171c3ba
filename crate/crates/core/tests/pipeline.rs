use ldmres::arch::{Network, NetworkConfig};
use ldmres::io::{expected_file_size, load_manifest, load_samples, save_image, save_mask};
use ldmres::train::{extract_patches, fit, train, AugmentPolicy, Sample, TrainConfig};
use ldmres::{Mask, Tensor4};

fn sample(k: usize, size: usize) -> Sample {
    let mask = Mask::from_fn(size, size, |y, x| (x + k) % 5 < 2 || y == k);
    let image = Tensor4::from_fn([1, 3, size, size], |_, c, y, x| {
        0.25 + 0.5 * mask.get(y, x) as u8 as f32 + 0.03 * ((x * 7 + y * 3 + c + k) % 5) as f32
    });
    Sample::new(image, mask, None, format!("s{k}")).unwrap()
}

fn small_net() -> Network {
    Network::new(NetworkConfig { stem_width: 4, stage_widths: [4, 8, 8], seed: 5, ..NetworkConfig::reference() }).unwrap()
}

fn run(threads: usize) -> (Vec<u8>, Network) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut net = small_net();
        let cfg = TrainConfig {
            epochs: 2,
            lr: 1e-3,
            augment: Some(AugmentPolicy { seed: 3, ..AugmentPolicy::default() }),
            seed: 3,
            ..TrainConfig::default()
        };
        let samples: Vec<Sample> = (0..5).map(|k| sample(k, 16)).collect();
        let h = fit(&mut net, &samples, &cfg).unwrap();
        let mut csv = Vec::new();
        ldmres::train::write_history_csv(&mut csv, &h).unwrap();
        (csv, net)
    })
}

#[test]
fn training_is_identical_across_thread_counts() {
    let (h1, n1) = run(1);
    let (h3, n3) = run(3);
    assert_eq!(h1, h3);
    assert_eq!(n1.store(), n3.store());
}

#[test]
fn default_schedule_decays_per_epoch() {
    let mut net = small_net();
    let cfg = TrainConfig { epochs: 4, batch_size: 2, ..TrainConfig::default() };
    let h = train(&mut net, &[sample(0, 16), sample(1, 16)], &[], &cfg).unwrap();
    for r in &h {
        let expected = 2e-5 * 0.9f64.powi(r.epoch as i32 - 1);
        assert!(((r.lr as f64) - expected).abs() <= expected * 1e-6, "epoch {}: {}", r.epoch, r.lr);
    }
    assert!(h.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
}

#[test]
fn large_image_tiles_into_35_patches() {
    let t = Tensor4::zeros([1, 1, 3200, 4480]);
    assert_eq!(extract_patches(&t, 640).unwrap().len(), 35);
    let odd = Tensor4::from_fn([1, 1, 700, 700], |_, _, y, x| (y * 700 + x) as f32);
    let patches = extract_patches(&odd, 640).unwrap();
    assert_eq!(patches.len(), 4);
    assert_eq!(ldmres::train::stitch_patches(&patches, 700, 700).unwrap(), odd);
}

#[test]
fn manifest_to_samples_keeps_order_and_fov() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut text = String::from("# three samples\n");
    for k in 0..3 {
        let s = sample(k, 8);
        save_image(&s.image, d.join(format!("i{k}.ppm"))).unwrap();
        save_mask(&s.mask, d.join(format!("m{k}.pgm"))).unwrap();
        text += &format!("i{k}.ppm\tm{k}.pgm");
        if k == 1 {
            save_mask(&Mask::from_fn(8, 8, |y, _| y < 4), d.join("fov.pgm")).unwrap();
            text += "\tfov.pgm";
        }
        text += "\n";
    }
    std::fs::write(d.join("list.tsv"), text).unwrap();
    let manifest = load_manifest(d.join("list.tsv")).unwrap();
    let samples = load_samples(&manifest).unwrap();
    assert_eq!(samples.len(), 3);
    for (k, s) in samples.iter().enumerate() {
        assert_eq!(s.mask, sample(k, 8).mask);
        assert!(s.source.ends_with(format!("i{k}.ppm")));
        assert_eq!(s.fov.is_some(), k == 1);
    }
    assert_eq!(samples[1].fov.as_ref().unwrap().count_foreground(), 32);
}

#[test]
fn model_file_size_formula() {
    let net = Network::new(NetworkConfig::reference()).unwrap();
    let names: usize = net.store().iter().map(|p| p.name.len()).sum();
    let ranks: usize = net.store().iter().map(|p| p.shape().len()).sum();
    let records = net.store().len();
    let values = net.count_params().1;
    let expected = 4 + 4 + 24 + records * 8 + names + 4 * ranks + 4 * values + 4;
    assert_eq!(expected_file_size(&net), expected);
}
