mod common;

use common::*;
use ctdiff::analysis::psnr;
use ctdiff::harness::benchmark::strip_timing;
use ctdiff::harness::io::*;
use ctdiff::harness::phantom::*;
use ctdiff::harness::*;
use ctdiff::operator::*;
use ctdiff::prior::ScorePrior;
use ctdiff::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

fn image(w: usize, h: usize, seed: u64) -> ImageGrid {
    ImageGrid::from_values(ImageShape::new(w, h), randn(w * h, &mut rng(seed))).unwrap()
}

#[test]
fn raw_image_round_trip_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.raw");
    let img = image(64, 64, 1);
    save_image(&path, &img).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 + 4 + 4 + 2 * 8 + 1 + 64 * 64 * 4);
    let back = load_image(&path).unwrap();
    let want: Vec<f64> = img.values.iter().map(|v| *v as f32 as f64).collect();
    assert_eq!(back.values, want);
    save_image(&path, &back).unwrap();
    assert_eq!(load_image(&path).unwrap(), back);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"DM4CTRAW");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
    assert_eq!(bytes[32], 0);
}

#[test]
fn raw_sinogram_uses_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.raw");
    let geom = ProjectionGeometry::parallel(7, (0.0, 0.75 * PI), 11, 0.5).unwrap().with_offset(0.25);
    let sino = Sinogram::from_values(geom.clone(), randn(77, &mut rng(2))).unwrap();
    save_sinogram(&path, &sino).unwrap();
    assert!(geometry_sidecar(&path).exists());
    let back = load_sinogram(&path).unwrap();
    assert_eq!(back.geometry, geom);
    assert!(back.values.iter().zip(&sino.values).all(|(a, b)| *a == *b as f32 as f64));
    assert!(load_image(&path).is_err());
}

#[test]
fn raw_rejects_damaged_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.raw");
    save_image(&path, &image(5, 4, 3)).unwrap();
    let good = std::fs::read(&path).unwrap();
    let write = |bytes: &[u8]| std::fs::write(&path, bytes).unwrap();

    let mut bad = good.clone();
    bad[0] = b'X';
    write(&bad);
    assert!(matches!(load_raw(&path), Err(Error::BadMagic { .. })));

    write(&good[..good.len() - 3]);
    match load_raw(&path) {
        Err(Error::Truncated { expected, found, .. }) => {
            assert_eq!(expected, good.len() as u64);
            assert_eq!(found, good.len() as u64 - 3);
        }
        other => panic!("{other:?}"),
    }

    let mut big = good.clone();
    big[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
    write(&big);
    assert!(matches!(load_raw(&path), Err(Error::DimOverflow { .. })));

    let mut version = good.clone();
    version[8] = 2;
    write(&version);
    assert!(matches!(load_raw(&path), Err(Error::UnsupportedFormat { what: "version", .. })));

    let mut kind = good.clone();
    kind[32] = 9;
    write(&kind);
    assert!(matches!(load_raw(&path), Err(Error::UnsupportedFormat { what: "kind", .. })));

    let mut sino = good;
    sino[32] = 1;
    write(&sino);
    assert!(matches!(load_raw(&path), Err(Error::Io(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn raw_round_trip_is_bit_exact(w in 1usize..20, h in 1usize..20, seed in 0u64..100) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.raw");
        let img = image(w, h, seed).map(|v| v as f32 as f64);
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        prop_assert_eq!(back.shape, img.shape);
        prop_assert!(back.values.iter().zip(&img.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn phantom_values_bounded_by_densities() {
    for kind in [PhantomKind::SheppLogan, PhantomKind::ModifiedSheppLogan, PhantomKind::Disks { count: 6, seed: 3 }] {
        let bound: f64 = kind.unit_ellipses().iter().map(|e| e.density.abs()).sum();
        let img = generate_phantom(&kind, 48).unwrap();
        assert!(img.values.iter().all(|v| v.abs() <= bound + 1e-12));
    }
    assert!(generate_phantom(&PhantomKind::SheppLogan, 8).is_err());
    assert!(PhantomKind::parse("cube").is_err());
}

#[test]
fn projected_phantom_matches_analytic_sinogram() {
    let shape = ImageShape::square(128);
    let img = generate_phantom(&PhantomKind::SheppLogan, 128).unwrap();
    let geom = ProjectionGeometry::covering(shape, 180).unwrap();
    let projected = forward_project(&img, &geom).unwrap();
    let exact = analytic_ellipse_sinogram(&to_physical(&shepp_logan(false), shape), &geom).unwrap();
    let err = rel(&projected.values, &exact.values);
    assert!(err < 0.02, "{err}");
}

#[test]
fn variants_are_seeded() {
    let a = variant_images(&PhantomKind::ModifiedSheppLogan, 16, 3, 5).unwrap();
    let b = variant_images(&PhantomKind::ModifiedSheppLogan, 16, 3, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
    let h = holdout_phantoms(&PhantomKind::ModifiedSheppLogan, 16, 2, 5).unwrap();
    assert_ne!(h[0], a[0]);
}

const PLAN: &str = r#"
seed = 4
dense_angles = 120
repeats = 2
[phantom]
kind = "modified-shepp-logan"
size = 24
[simulation]
configs = ["i", "ii", "lim"]
[config.lim]
base = "v"
n_angles = 20
[method.fbp]
[method.sirt]
iterations = 50
[method.dps]
strategy = "dcgrad"
steps = 8
eta = 0.5
[method.broken]
strategy = "dcopt"
steps = 4
inner_iters = 3
lr = 1e6
[prior]
training = 6
"#;

fn plan_in(dir: &std::path::Path, text: &str) -> ExperimentPlan {
    let cfg = Config::parse(text)
        .unwrap()
        .with_overrides(&[format!("output={}", dir.display())])
        .unwrap();
    ExperimentPlan::from_config(&cfg).unwrap()
}

#[test]
fn plan_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan_in(dir.path(), PLAN);
    assert_eq!(plan.methods.len(), 4);
    assert_eq!(plan.configs.len(), 3);
    let lim = &plan.configs[2].1;
    assert_eq!(lim.n_angles, 20);
    assert!((lim.angular_range.1 - 0.75 * PI).abs() < 1e-12);
    match &plan.methods[2].kind {
        MethodKind::Guidance { spec, .. } => {
            assert_eq!(spec.steps, 8);
            assert_eq!(spec.eta, 0.5);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(plan.prior.training, 6);

    let bad = Config::parse("[method.x]\nstrategy = \"dcgrad\"\nwobble = 2\n").unwrap();
    match ExperimentPlan::from_config(&bad) {
        Err(Error::Config { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("wobble"));
        }
        other => panic!("{other:?}"),
    }
    let empty = ExperimentPlan::from_config(&Config::parse("").unwrap()).unwrap();
    assert!(empty.validate().is_err());
}

#[test]
fn benchmark_matrix_rows_and_reproducibility() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let r1 = run_benchmark(&plan_in(d1.path(), PLAN)).unwrap();
    let r2 = run_benchmark(&plan_in(d2.path(), PLAN)).unwrap();
    assert_eq!(r1.rows.len(), 4 * 3 * 2);
    let c1 = std::fs::read_to_string(&r1.csv_path).unwrap();
    let c2 = std::fs::read_to_string(&r2.csv_path).unwrap();
    assert_eq!(c1.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(strip_timing(&c1), strip_timing(&c2));

    let find = |m: &str, c: &str, seed: u64| {
        r1.rows.iter().find(|r| r.method == m && r.config == c && r.seed == seed).unwrap()
    };
    for m in ["fbp", "sirt"] {
        let (a, b) = (find(m, "ii", 4), find(m, "ii", 5));
        assert!(a.is_ok());
        assert_eq!((a.psnr, a.ssim, a.data_fit), (b.psnr, b.ssim, b.data_fit));
    }
    assert!(find("fbp", "ii", 4).psnr < find("fbp", "i", 4).psnr);
    assert!(find("dps", "i", 4).is_ok());
    let broken = find("broken", "i", 4);
    assert!(broken.status.starts_with("error"), "{}", broken.status);
    assert!(broken.psnr.is_none());

    assert!(d1.path().join("fbp_i_r0.raw").exists());
    assert!(d1.path().join("dps_ii_std.raw").exists());
    let obs = load_sinogram(&d1.path().join("observed_lim.raw")).unwrap();
    assert!(obs.geometry.angles.iter().all(|a| *a < 0.75 * PI));
}

fn gaussian_task(n: usize) -> (Task, Vec<ImageGrid>) {
    let mut task = Task::new(ImageShape::square(n));
    task.dense_angles = 60;
    let fitted = fit_prior(
        task.shape,
        &PriorSettings {
            training: 8,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(matches!(fitted.prior, ScorePrior::Gaussian(_)));
    task.prior = Some(fitted);
    let holdouts = holdout_phantoms(&PhantomKind::ModifiedSheppLogan, n, 3, 0).unwrap();
    (task, holdouts)
}

#[test]
fn grid_search_contracts() {
    let (task, holdouts) = gaussian_task(16);
    let config = ctdiff::simulate::builtin_config("i").unwrap();
    let mut method = MethodSpec::from_family("dps", "dps").unwrap();
    method.set("steps", "6").unwrap();

    let single = grid_search(&task, &method, "eta", &[0.3], &config, &holdouts, 1).unwrap();
    assert_eq!(single.best_value, 0.3);

    let grid = [0.01, 0.1, 1.0, 10.0];
    let a = grid_search(&task, &method, "eta", &grid, &config, &holdouts, 1).unwrap();
    let b = grid_search(&task, &method, "eta", &[a.best_value, 1e-3], &config, &holdouts, 1).unwrap();
    assert_eq!(a, grid_search(&task, &method, "eta", &grid, &config, &holdouts, 1).unwrap());
    let best = a.points.iter().find(|p| p.value == a.best_value).unwrap();
    assert!(b.points[0].mean_mse == best.mean_mse);
    assert!(b.best_value == a.best_value || b.points[1].mean_mse < best.mean_mse);

    // eta has no effect on unconditional sampling, so every point ties.
    let none = MethodSpec::from_family("u", "none").unwrap().with_param("steps", 4.0).unwrap();
    let tie = grid_search(&task, &none, "eta", &[3.0, 1.0, 2.0], &config, &holdouts, 1).unwrap();
    assert_eq!(tie.best_value, 1.0);

    assert!(grid_search(&task, &method, "eta", &[], &config, &holdouts, 1).is_err());
    let csv = a.to_csv();
    assert!(csv.starts_with("eta,mean_mse,failures\n"));
    assert_eq!(csv.lines().count(), grid.len() + 1);
}

#[test]
fn guidance_runs_in_normalized_range() {
    let (task, holdouts) = gaussian_task(16);
    let tp = task.prior.as_ref().unwrap();
    let train = variant_images(&PhantomKind::ModifiedSheppLogan, 16, 8, PriorSettings::default().seed).unwrap();
    let lo = train.iter().map(|g| g.min_max().0).fold(f64::INFINITY, f64::min);
    let hi = train.iter().map(|g| g.min_max().1).fold(f64::NEG_INFINITY, f64::max);
    assert!((tp.scale * lo + tp.offset + 1.0).abs() < 1e-12);
    assert!((tp.scale * hi + tp.offset - 1.0).abs() < 1e-12);

    let config = ctdiff::simulate::builtin_config("i").unwrap();
    let obs = measure(&task, &holdouts[0], &config).unwrap();
    let mut m = MethodSpec::from_family("dds", "dds").unwrap();
    m.set("steps", "10").unwrap();
    m.set("dds_gamma", "100").unwrap();
    let out = reconstruct(&task, &m, &obs, 0).unwrap();
    let fbp = reconstruct(&task, &MethodSpec::from_family("f", "fbp").unwrap(), &obs, 0).unwrap();
    assert!(psnr(&out.image, &holdouts[0]).unwrap() > psnr(&fbp.image, &holdouts[0]).unwrap());
    assert_eq!(out.trajectory.unwrap().records.len(), 10);
}
