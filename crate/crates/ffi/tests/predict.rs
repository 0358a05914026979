//! Predictions through the C ABI agree with the Rust API on the same checkpoint.

use std::ffi::CString;
use std::ptr;

use anode_core::anode::{encode_initial_state, rollout, save_model, AnodeModel as Model, ModelConfig, ModelKind};
use anode_core::data::Normalizer;
use anode_ffi::*;
use ndarray::Array2;

#[test]
fn predict_matches_core_in_physical_units() {
    let config = ModelConfig { kind: ModelKind::TcnAnode, rhs_layers: 1, rhs_width: 8, encoder_width: 4, history: 4, seed: 2, ..ModelConfig::default() };
    let model = Model::new(config, 2).unwrap();
    let norm = Normalizer {
        input_mean: vec![0.5, 0.3],
        input_scale: vec![0.1, 0.2],
        output_mean: vec![0.4, 1.0, 314.0, 0.99],
        output_scale: vec![0.1, 1e-3, 0.1, 5e-4],
    };
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_model(dir.path(), "tcn", &model, &norm, None, "test").unwrap();

    let (h, k) = (4, 6);
    let uh = Array2::from_shape_fn((h, 2), |(i, j)| 0.5 + 0.01 * (i + j) as f64);
    let yh = Array2::from_shape_fn((h, 4), |(i, j)| norm.output_mean[j] + norm.output_scale[j] * (0.1 * i as f64 - 0.2));
    let uf = Array2::from_shape_fn((k, 2), |(i, j)| 0.45 + 0.02 * (i * j) as f64);

    let x0 = encode_initial_state(&model, norm.apply_inputs(&uh).view(), norm.apply_outputs(&yh).view()).unwrap();
    let expected = norm.invert_outputs(&rollout(&model, &x0, norm.apply_inputs(&uf).view()).unwrap());

    let path = CString::new(manifest.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    let mut out = vec![0.0; k * 4];
    unsafe {
        assert_eq!(anode_model_load(path.as_ptr(), &mut handle), AnodeStatus::Ok);
        let (mut nu, mut ny, mut hist) = (0, 0, 0);
        assert_eq!(anode_model_shape(handle, &mut nu, &mut ny, &mut hist), AnodeStatus::Ok);
        assert_eq!((nu, ny, hist), (2, 4, h));
        let status = anode_model_predict(
            handle,
            uh.as_slice().unwrap().as_ptr(),
            h * 2,
            yh.as_slice().unwrap().as_ptr(),
            h * 4,
            uf.as_slice().unwrap().as_ptr(),
            k * 2,
            k,
            out.as_mut_ptr(),
            out.len(),
        );
        assert_eq!(status, AnodeStatus::Ok);
        assert_eq!(anode_model_predict(handle, uh.as_ptr(), h * 2, yh.as_ptr(), h * 4, uf.as_ptr(), k * 2, k, out.as_mut_ptr(), 3), AnodeStatus::DimensionMismatch);
        anode_model_free(handle);
    }
    assert_eq!(out, expected.iter().copied().collect::<Vec<_>>());
}
