use flashcap_core::event::{read_csv, write_csv, RECORD_LEN, HEADER_LEN};
use flashcap_core::{partition_into_frames, read_event_stream, write_event_stream, Event, EventError, EventStream, Polarity, StreamHeader};
use proptest::prelude::*;

fn arb_stream() -> impl Strategy<Value = EventStream> {
    (0u64..5_000, prop::collection::vec((0u64..20_000, 0u16..1280, 0u16..720, any::<bool>()), 0..300), 0u64..3_000)
        .prop_map(|(t_start, raw, tail)| {
            let mut events: Vec<Event> = raw
                .into_iter()
                .map(|(dt, x, y, p)| Event::new(t_start + dt, x, y, if p { Polarity::Positive } else { Polarity::Negative }))
                .collect();
            events.sort();
            let t_end = events.last().map_or(t_start, |e| e.t + 1) + tail;
            let header = StreamHeader { sensor_width: 1280, sensor_height: 720, t_start, t_end, event_count: events.len() as u64 };
            EventStream::new(header, events).unwrap()
        })
}

proptest! {
    #[test]
    fn binary_round_trip_is_byte_exact(stream in arb_stream()) {
        let bytes = write_event_stream(stream.header(), stream.events()).unwrap();
        prop_assert_eq!(bytes.len(), HEADER_LEN + RECORD_LEN * stream.events().len());
        let back = read_event_stream(&bytes).unwrap();
        prop_assert_eq!(&back, &stream);
        prop_assert_eq!(write_event_stream(back.header(), back.events()).unwrap(), bytes);
    }

    #[test]
    fn csv_round_trip_keeps_events(stream in arb_stream()) {
        let mut buf = Vec::new();
        write_csv(&mut buf, stream.events()).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.events(), stream.events());
    }

    #[test]
    fn framing_conserves_events(stream in arb_stream(), window in 1u64..4_000) {
        let frames: Vec<_> = stream.frames(window).unwrap().collect();
        let total: usize = frames.iter().map(|f| f.events.len()).sum();
        prop_assert_eq!(total, stream.events().len());
        for (k, f) in frames.iter().enumerate() {
            prop_assert_eq!(f.index, k);
            prop_assert_eq!(f.window_end - f.window_start, window);
            prop_assert!(f.events.iter().all(|e| f.window_start <= e.t && e.t < f.window_end));
        }
        let h = stream.header();
        prop_assert_eq!(frames.len() as u64, h.span_us().div_ceil(window));
    }

    #[test]
    fn truncated_files_are_rejected(stream in arb_stream(), cut in 1usize..40) {
        let bytes = write_event_stream(stream.header(), stream.events()).unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(read_event_stream(&bytes[..bytes.len() - cut]).is_err());
    }
}

#[test]
fn frame_boundaries_are_half_open() {
    let events = vec![
        Event::new(0, 1, 1, Polarity::Positive),
        Event::new(1000, 1, 1, Polarity::Positive),
        Event::new(2500, 1, 1, Polarity::Negative),
    ];
    let header = StreamHeader::for_events(&events);
    let counts: Vec<usize> = partition_into_frames(&header, &events, 1000).unwrap().map(|f| f.events.len()).collect();
    assert_eq!(counts, [1, 1, 1]);

    let pair = vec![Event::new(0, 1, 1, Polarity::Positive), Event::new(999, 1, 1, Polarity::Positive)];
    let counts: Vec<usize> =
        partition_into_frames(&StreamHeader::for_events(&pair), &pair, 1000).unwrap().map(|f| f.events.len()).collect();
    assert_eq!(counts, [2]);

    let empty = StreamHeader { sensor_width: 1280, sensor_height: 720, t_start: 0, t_end: 3000, event_count: 0 };
    assert_eq!(partition_into_frames(&empty, &[], 1000).unwrap().filter(|f| f.events.is_empty()).count(), 3);
    assert!(matches!(partition_into_frames(&empty, &[], 0), Err(EventError::ZeroWindow)));
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let events = vec![Event::new(3, 10, 20, Polarity::Positive), Event::new(7, 11, 21, Polarity::Negative)];
    let stream = EventStream::new(StreamHeader::for_events(&events), events).unwrap();
    let path = dir.path().join("s.fevt");
    flashcap_core::event::write_event_file(&path, &stream).unwrap();
    assert_eq!(flashcap_core::event::read_any(&path).unwrap(), stream);
    let csv = dir.path().join("s.csv");
    write_csv(std::fs::File::create(&csv).unwrap(), stream.events()).unwrap();
    assert_eq!(flashcap_core::event::read_any(&csv).unwrap().events(), stream.events());
}
