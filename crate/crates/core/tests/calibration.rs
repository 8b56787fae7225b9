use fiun::dataset::{synth_gaussian_blobs, BlobSpec, DEFAULT_CENTER_SCALE};
use fiun::model::{accuracy, train, TrainConfig};

// The default separation must let the default schedule fit the default
// 10-class blobs above 95%, and a much smaller one must not, so the default
// is not trivially large.
#[test]
fn default_center_scale_is_calibrated() {
    for seed in 0..3 {
        let spec = BlobSpec {
            seed,
            ..BlobSpec::default()
        };
        assert_eq!(spec.center_scale, DEFAULT_CENTER_SCALE);
        let ds = synth_gaussian_blobs(&spec).unwrap();
        let m = train(
            None,
            &ds,
            &TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let acc = accuracy(&m, &ds, None).unwrap().value;
        assert!(acc > 0.95, "seed {seed}: accuracy {acc}");

        let half = BlobSpec {
            center_scale: DEFAULT_CENTER_SCALE / 2.0,
            ..spec
        };
        let ds = synth_gaussian_blobs(&half).unwrap();
        let m = train(
            None,
            &ds,
            &TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!(accuracy(&m, &ds, None).unwrap().value < 0.95);
    }
}
