use hyperseg_core::image_io::{decode_frame_png, encode_frame_png, encode_mask_png, decode_mask_png};
use hyperseg_core::interaction::{simulate_clicks, ClickSimParams};
use hyperseg_core::trainer::{generate_scene_sized, Model};
use hyperseg_core::Tensor;

#[test]
fn frame_to_proposals_at_native_size() {
    let model = Model::desk(3, 2).unwrap();
    for (w, h) in [(33, 47), (64, 32), (20, 20)] {
        let s = generate_scene_sized(w as u64 * 100 + h as u64, w, h);
        // Frames survive the 8-bit PNG path used by the service.
        let frame = decode_frame_png(&encode_frame_png(&s.frame_curr).unwrap()).unwrap();
        let feats = model.extract(&frame).unwrap();
        assert_eq!(feats.extents(), (w, h));
        assert_eq!(feats.tile_count, w.div_ceil(32) * h.div_ceil(32));
        let clicks = simulate_clicks(&s.gt_mask, 1, 3, 3, &ClickSimParams::default()).unwrap();
        let p = model.propose(&feats.features, &frame, Some(&s.frame_prev), &clicks).unwrap();
        assert_eq!(p.soft_maps.shape(), &[3, w, h]);
        let head = p.head(1).unwrap();
        let png = decode_mask_png(&encode_mask_png(&head).unwrap()).unwrap();
        let thresholded = head.map(|v| (v >= 0.5) as u8 as f64).unwrap();
        assert_eq!(png, thresholded);
    }
}

#[test]
fn containers_round_trip_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let t = Tensor::from_fn(&[2, 3, 5], |i| (i[0] as f64 - 0.5) * 1e-300 + i[1] as f64 / 3.0 + i[2] as f64).unwrap();
    let path = tmp.path().join("t.hseg");
    t.save(&path).unwrap();
    let back = Tensor::load(&path).unwrap();
    assert_eq!(back.shape(), t.shape());
    assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}
