use evtpr_core::event_model::Polarity;
use evtpr_core::io::{
    decode_events, decode_frame, decode_tensor, encode_events, encode_frame, encode_tensor, events_from_csv,
    events_to_csv, load_named_tensors, read_events, save_named_tensors, write_events,
};
use evtpr_core::kernels::{PipelineConfig, PipelineParams};
use evtpr_core::{Event, EventStream, IntensityFrame, Tensor};
use proptest::prelude::*;

fn stream_strategy() -> impl Strategy<Value = EventStream> {
    (1u16..64, 1u16..64, 0u64..1_000_000, 0u64..1_000_000).prop_flat_map(|(w, h, t0, len)| {
        let event = (0..w, 0..h, t0..=t0 + len, any::<bool>())
            .prop_map(|(x, y, t, pos)| Event::new(x, y, t, if pos { Polarity::Positive } else { Polarity::Negative }));
        prop::collection::vec(event, 0..200).prop_map(move |mut events| {
            events.sort_by(Event::canonical_cmp);
            EventStream::new(events, w, h, t0, t0 + len).unwrap()
        })
    })
}

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0usize..5, 0..4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(-1e6f32..1e6, n).prop_map(move |data| Tensor::from_vec(shape.clone(), data).unwrap())
    })
}

fn frame_strategy() -> impl Strategy<Value = IntensityFrame> {
    (1usize..20, 1usize..20, prop::sample::select(vec![1usize, 3])).prop_flat_map(|(w, h, c)| {
        prop::collection::vec(any::<u8>(), w * h * c).prop_map(move |bytes| {
            IntensityFrame::new(0, w, h, c, bytes.iter().map(|&b| b as f64 / 255.0).collect()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn event_codecs_round_trip(stream in stream_strategy()) {
        let bytes = encode_events(&stream);
        prop_assert_eq!(bytes.len(), 36 + 16 * stream.len());
        let back = decode_events(&bytes).unwrap();
        prop_assert_eq!(&back, &stream);
        prop_assert_eq!(encode_events(&back), bytes);
        let csv = events_from_csv(&events_to_csv(&stream)).unwrap();
        prop_assert_eq!(csv, stream);
    }

    #[test]
    fn tensor_codec_round_trips(t in tensor_strategy()) {
        let bytes = encode_tensor(&t);
        prop_assert_eq!(bytes.len(), 8 + 4 * t.ndim() + 4 * t.len());
        let back = decode_tensor(&bytes).unwrap();
        prop_assert_eq!(encode_tensor(&back), bytes);
        prop_assert_eq!(back, t);
    }

    #[test]
    fn pixmap_codec_round_trips(frame in frame_strategy()) {
        let bytes = encode_frame(&frame);
        let back = decode_frame(&bytes, 0).unwrap();
        prop_assert_eq!(encode_frame(&back), bytes);
        prop_assert_eq!(back, frame);
    }

    #[test]
    fn truncated_event_files_are_rejected(stream in stream_strategy(), cut in 1usize..40) {
        let bytes = encode_events(&stream);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_events(&bytes[..keep]).is_err());
    }
}

#[test]
fn event_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.evt");
    let s = EventStream::new(vec![Event::new(1, 2, 3, Polarity::Positive)], 4, 4, 0, 10).unwrap();
    write_events(&path, &s).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 52);
    assert_eq!(read_events(&path).unwrap(), s);
    let empty = EventStream::empty(4, 4, 0, 10).unwrap();
    write_events(&path, &empty).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 36);
}

#[test]
fn parameter_sets_round_trip() {
    let config = PipelineConfig { temporal_dim: 16, compressed_dim: 4, decoder_hidden: 8, ..PipelineConfig::default() };
    let params = PipelineParams::seeded(&config, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_named_tensors(dir.path(), &params.named_tensors()).unwrap();
    let loaded = load_named_tensors(dir.path()).unwrap();
    assert_eq!(PipelineParams::from_named_tensors(&config, &loaded).unwrap(), params);
    let mut missing = loaded.clone();
    missing.pop();
    assert!(PipelineParams::from_named_tensors(&config, &missing).is_err());
}
