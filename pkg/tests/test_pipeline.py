from __future__ import annotations

import threading
import time

import numpy as np
import pytest

from alpr.backends import Backends, MockClassifier, MockDetector, TensorMockDetector
from alpr.config import (
    CLASSIFIER_METADATA,
    DETECTOR_METADATA,
    PipelineConfig,
    parse_config_text,
)
from alpr.errors import BackendFailure, ConfigError
from alpr.geometry import BBox, DetectorHeadSpec, filters_for
from alpr.imaging import ImageBuf
from alpr.ocr import MockOcrEngine, OcrResult
from alpr.pipeline import (
    DetectionEvent,
    VEHICLE_CLASSES,
    gate_frame,
    letterbox,
    process_frame,
    run,
)
from alpr.sources import (
    FrameEnvelope,
    PacedSource,
    SyntheticSource,
    synthetic_frames,
)

from conftest import make_image


def envelope(index=0, width=64, height=48, seed=1) -> FrameEnvelope:
    return FrameEnvelope(
        frame_index=index,
        timestamp_ms=index * 100.0,
        image=make_image(width, height, seed=seed),
    )


def mock_backends(**overrides) -> Backends:
    values = dict(
        classifier=MockClassifier(),
        detector=MockDetector(),
        ocr=MockOcrEngine(),
        head_spec=None,
    )
    values.update(overrides)
    return Backends(**values)


class CountingClassifier:
    def __init__(self, scores):
        self.scores = scores
        self.calls = 0

    def classify(self, image):
        self.calls += 1
        return self.scores


class CountingOcr:
    def __init__(self):
        self.calls = 0

    def recognize(self, prepared):
        self.calls += 1
        return OcrResult("ঢাকা মেট্রো", 5.0)


class TestLetterbox:
    def test_square_input_no_padding(self):
        img = make_image(100, 100)
        boxed, mapping = letterbox(img)
        assert (boxed.width, boxed.height) == (416, 416)
        assert mapping.pad_x == 0 and mapping.pad_y == 0

    def test_hd_frame_padding_arithmetic(self):
        img = make_image(1920, 1080)
        boxed, mapping = letterbox(img)
        assert mapping.pad_y == 91  # (416 - 234) // 2
        assert mapping.pad_x == 0
        # padding rows are black
        assert np.all(boxed.data[:91] == 0)
        assert np.all(boxed.data[416 - 91 :] == 0)

    def test_round_trip_stays_inside_frame(self):
        from alpr.geometry import to_pixel

        img = make_image(640, 360)
        _, mapping = letterbox(img)
        for cx, cy in ((0.1, 0.1), (0.5, 0.5), (0.9, 0.95)):
            frame_box = mapping.box_to_frame(BBox(cx, cy, 0.2, 0.1, 0, 0.9))
            rect = to_pixel(frame_box, img.width, img.height)
            assert rect.x + rect.width <= img.width
            assert rect.y + rect.height <= img.height


class TestGate:
    def test_argmax_above_threshold(self):
        vc = gate_frame(envelope(), MockClassifier((0.9, 0.05, 0.03, 0.02)), 0.5)
        assert vc is not None and vc.label == "bus" and vc.score == 0.9

    def test_all_below_threshold(self):
        assert gate_frame(envelope(), MockClassifier((0.2, 0.2, 0.2, 0.2)), 0.5) is None

    def test_tie_break_lowest_index(self):
        vc = gate_frame(envelope(), MockClassifier((0.5, 0.5, 0.0, 0.0)), 0.5)
        assert vc is not None and vc.label == "bus"

    def test_bad_score_vector_is_backend_failure(self):
        with pytest.raises(BackendFailure) as exc:
            gate_frame(envelope(), MockClassifier((0.5, 0.5)), 0.5)
        assert exc.value.stage == "classifier"

    def test_class_order(self):
        assert VEHICLE_CLASSES == ("bus", "car", "motorbike", "truck")


class TestProcessFrame:
    def test_gated_out_frame_never_reaches_detector_or_ocr(self):
        classifier = CountingClassifier((0.1, 0.1, 0.1, 0.1))
        ocr_engine = CountingOcr()

        class CountingDetector:
            calls = 0

            def detect(self, image):
                type(self).calls += 1
                return []

        backends = mock_backends(
            classifier=classifier, detector=CountingDetector(), ocr=ocr_engine
        )
        events = process_frame(envelope(), PipelineConfig(), backends)
        assert events == []
        assert CountingDetector.calls == 0
        assert ocr_engine.calls == 0

    def test_mock_passthrough_event(self):
        events = process_frame(envelope(width=256, height=256), PipelineConfig(), mock_backends())
        assert len(events) == 1
        event = events[0]
        assert event.normalized_text == "ঢাকা মেট্রো গ ১২-৩৪৫৬"
        assert event.vehicle_class.label == "bus"
        assert event.detector_score == 0.9
        assert event.ocr_error == ""

    def test_two_boxes_ordered_by_score(self):
        detector = MockDetector(
            [
                BBox(0.3, 0.3, 0.2, 0.15, 0, 0.7),
                BBox(0.7, 0.7, 0.2, 0.15, 0, 0.9),
            ]
        )
        events = process_frame(
            envelope(width=400, height=400), PipelineConfig(), mock_backends(detector=detector)
        )
        assert [e.detector_score for e in events] == [0.9, 0.7]
        assert events[0].plate_rect != events[1].plate_rect

    def test_plate_rect_inside_frame(self):
        detector = MockDetector([BBox(0.98, 0.02, 0.3, 0.3, 0, 0.9)])
        events = process_frame(
            envelope(width=320, height=200), PipelineConfig(), mock_backends(detector=detector)
        )
        for event in events:
            assert event.plate_rect.x + event.plate_rect.width <= 320
            assert event.plate_rect.y + event.plate_rect.height <= 200

    def test_tensor_detector_path(self):
        spec = DetectorHeadSpec(1, 1, 416, 416, 13, ((104, 104),))
        raw = np.full(spec.tensor_size, -40.0)
        base = ((6 * 13 + 6) * 1 + 0) * 6
        raw[base : base + 6] = [0.0, 0.0, 0.0, 0.0, 100.0, 100.0]
        backends = mock_backends(detector=TensorMockDetector(raw), head_spec=spec)
        events = process_frame(envelope(width=416, height=416), PipelineConfig(), backends)
        assert len(events) == 1
        rect = events[0].plate_rect
        assert (rect.x, rect.y, rect.width, rect.height) == (156, 156, 104, 104)

    def test_tensor_without_head_spec_fails(self):
        backends = mock_backends(detector=TensorMockDetector(np.zeros(6)), head_spec=None)
        with pytest.raises(BackendFailure) as exc:
            process_frame(envelope(), PipelineConfig(), backends)
        assert exc.value.stage == "detector"

    def test_unusable_crop_yields_empty_text_event(self):
        # uniform frame -> degenerate histogram in preprocessing
        img = ImageBuf.filled(256, 256, 3, 128)
        frame = FrameEnvelope(frame_index=0, timestamp_ms=0.0, image=img)
        events = process_frame(frame, PipelineConfig(), mock_backends())
        assert len(events) == 1
        assert events[0].raw_text == ""
        assert events[0].ocr_error == "unusable_crop"

    def test_engine_not_found_yields_flagged_event(self):
        from alpr.ocr import ExternalOcrEngine

        backends = mock_backends(
            ocr=ExternalOcrEngine("/nonexistent/engine {input} {output_base}")
        )
        events = process_frame(envelope(width=256, height=256), PipelineConfig(), backends)
        assert len(events) == 1
        assert events[0].raw_text == ""
        assert events[0].ocr_error == "engine_not_found"


class TestRun:
    def test_empty_source_all_zeros(self):
        source = SyntheticSource(synthetic_frames(32, 32), count=0)
        sink_calls = []
        summary = run(source, lambda e, c: sink_calls.append(e), PipelineConfig(), mock_backends())
        assert summary.frames_in == 0
        assert summary.frames_processed == 0
        assert summary.events == 0
        assert summary.fps == 0.0
        assert sink_calls == []

    def test_conservation_and_order(self):
        source = SyntheticSource(synthetic_frames(64, 48), count=12, fps=30)
        events: list[DetectionEvent] = []
        summary = run(source, lambda e, c: events.append(e), PipelineConfig(), mock_backends())
        assert summary.frames_in == 12
        assert summary.frames_in == summary.frames_processed + summary.frames_dropped
        assert summary.frames_dropped == 0
        assert summary.events == len(events) == 12
        indices = [e.frame_index for e in events]
        assert indices == sorted(indices)

    def test_fps_consistency(self):
        source = SyntheticSource(synthetic_frames(64, 48), count=10, fps=30)
        summary = run(source, lambda e, c: None, PipelineConfig(), mock_backends())
        assert summary.fps == pytest.approx(
            summary.frames_processed / (summary.elapsed_ms / 1000.0), rel=1e-6
        )

    def test_realtime_source_drops_when_backends_slow(self):
        class SlowClassifier:
            def classify(self, image):
                time.sleep(0.02)
                return (0.9, 0.05, 0.03, 0.02)

        source = PacedSource(SyntheticSource(synthetic_frames(32, 32), count=60, fps=500))
        config = PipelineConfig(queue_capacity=2)
        backends = mock_backends(classifier=SlowClassifier(), detector=MockDetector([]))
        summary = run(source, lambda e, c: None, config, backends)
        assert summary.frames_dropped > 0
        assert summary.frames_in == summary.frames_processed + summary.frames_dropped

    def test_stop_signal_ends_run(self):
        source = SyntheticSource(synthetic_frames(32, 32), count=None, fps=30)
        stop = threading.Event()
        results = {}

        def target():
            results["summary"] = run(
                source, lambda e, c: None, PipelineConfig(), mock_backends(), stop=stop
            )

        worker = threading.Thread(target=target)
        worker.start()
        time.sleep(0.25)
        stop.set()
        worker.join(timeout=5.0)
        assert not worker.is_alive()
        summary = results["summary"]
        assert summary.frames_processed > 0
        assert summary.frames_in == summary.frames_processed + summary.frames_dropped

    def test_source_failure_recorded(self):
        class ExplodingSource:
            real_time = False
            fps = 30.0

            def __iter__(self):
                yield envelope(0)
                raise IOError("camera unplugged")

        summary = run(ExplodingSource(), lambda e, c: None, PipelineConfig(), mock_backends())
        assert summary.error is not None and "camera unplugged" in summary.error
        assert summary.frames_processed == 1

    def test_backend_failure_recorded(self):
        class BrokenDetector:
            def detect(self, image):
                raise RuntimeError("weights corrupt")

        summary = run(
            SyntheticSource(synthetic_frames(32, 32), count=3),
            lambda e, c: None,
            PipelineConfig(),
            mock_backends(detector=BrokenDetector()),
        )
        assert summary.error is not None and "weights corrupt" in summary.error

    def test_deterministic_event_stream(self):
        def collect():
            source = SyntheticSource(synthetic_frames(64, 48), count=8, fps=25)
            events: list[DetectionEvent] = []
            run(source, lambda e, c: events.append(e), PipelineConfig(), mock_backends())
            return events

        assert collect() == collect()


class TestConfig:
    def test_defaults(self):
        config = PipelineConfig()
        assert config.gate_threshold == 0.5
        assert config.detector_conf_threshold == 0.25
        assert config.nms_iou_threshold == 0.45
        assert config.queue_capacity == 8
        assert config.ocr_language == "ben"

    def test_parse_round_trip(self):
        text = "gate_threshold = 0.6\nqueue_capacity = 4\nocr_language = ben\n"
        config = parse_config_text(text)
        assert config.gate_threshold == 0.6
        assert config.queue_capacity == 4

    def test_unknown_key_rejected_by_name(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("gate_treshold = 0.5\n")
        assert exc.value.key == "gate_treshold"

    def test_range_validation(self):
        with pytest.raises(ConfigError):
            parse_config_text("gate_threshold = 1.5\n")
        with pytest.raises(ConfigError):
            parse_config_text("queue_capacity = 0\n")

    def test_comments_and_blanks_ignored(self):
        config = parse_config_text("# comment\n\nport = 9999\n")
        assert config.port == 9999


class TestModelMetadata:
    def test_detector_filters_agree_with_head_arithmetic(self):
        spec = DetectorHeadSpec(5, 1, 416, 416, 13, ((24, 12),) * 5)
        assert DETECTOR_METADATA.filters == filters_for(spec)
        assert DETECTOR_METADATA.classes == 1
        assert (DETECTOR_METADATA.width, DETECTOR_METADATA.height) == (416, 416)

    def test_classifier_record_values(self):
        assert CLASSIFIER_METADATA.classes == 4
        assert CLASSIFIER_METADATA.batch == 32
        assert (CLASSIFIER_METADATA.width, CLASSIFIER_METADATA.height) == (96, 96)
        assert CLASSIFIER_METADATA.steps == "190, 90"
