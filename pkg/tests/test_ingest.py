import io

import pytest
from hypothesis import given, strategies as st

from drowsewatch.ingest import (
    AnnotationError,
    BoundingBox,
    Detection,
    DetectionLabel,
    FrameDetection,
    Gender,
    Lighting,
    ParticipantCode,
    ParticipantCodeError,
    RecordFormatError,
    StreamOrderError,
    format_detection_record,
    format_participant_code,
    parse_annotation_xml,
    parse_detection_log,
    parse_participant_code,
)

ALL_LABELS = ("face", "opened_eye", "closed_eye", "mouth", "yawn", "eyebrow")


class TestLabels:
    def test_exactly_six_labels(self):
        assert sorted(l.value for l in DetectionLabel) == sorted(ALL_LABELS)

    @pytest.mark.parametrize("name", ALL_LABELS)
    def test_parse_known(self, name):
        assert DetectionLabel.parse(name).value == name

    @pytest.mark.parametrize("name", ["nose", "eye", "OPENED_EYE", "", "face "])
    def test_parse_unknown_rejected(self, name):
        with pytest.raises(ValueError, match="unknown detection label"):
            DetectionLabel.parse(name)


class TestBoundingBox:
    def test_valid(self):
        box = BoundingBox(10, 10, 40, 30)
        assert (box.x_min, box.y_min, box.x_max, box.y_max) == (10, 10, 40, 30)

    @pytest.mark.parametrize("coords", [(40, 10, 10, 30), (10, 30, 40, 30), (10, 10, 10, 30)])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(ValueError, match="degenerate"):
            BoundingBox(*coords)

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            BoundingBox(-1, 0, 10, 10)


class TestDetectionLog:
    def test_single_line(self):
        line = '{"t":100,"d":[["closed_eye",[10,10,40,30],0.95]]}'
        frames = list(parse_detection_log(line))
        assert len(frames) == 1
        frame = frames[0]
        assert frame.timestamp_ms == 100
        assert len(frame.detections) == 1
        det = frame.detections[0]
        assert det.label is DetectionLabel.CLOSED_EYE
        assert det.box == BoundingBox(10, 10, 40, 30)
        assert det.confidence == pytest.approx(0.95)

    def test_empty_stream(self):
        assert list(parse_detection_log("")) == []
        assert list(parse_detection_log(b"")) == []

    def test_non_monotonic_timestamp(self):
        text = '{"t":200,"d":[]}\n{"t":150,"d":[]}\n'
        with pytest.raises(StreamOrderError) as exc_info:
            list(parse_detection_log(text))
        assert exc_info.value.line_no == 2

    def test_equal_timestamp_rejected(self):
        text = '{"t":200,"d":[]}\n{"t":200,"d":[]}\n'
        with pytest.raises(StreamOrderError):
            list(parse_detection_log(text))

    @pytest.mark.parametrize(
        "line",
        [
            "not json",
            '{"t":1}',
            '{"t":"1","d":[]}',
            '{"t":1,"d":[["closed_eye",[10,10,40,30]]]}',
            '{"t":1,"d":[["nose",[10,10,40,30],0.5]]}',
            '{"t":1,"d":[["closed_eye",[40,10,10,30],0.5]]}',
            '{"t":1,"d":[["closed_eye",[10,10,40,30],1.5]]}',
            '{"t":1,"d":[["closed_eye",[10,10,40,30],true]]}',
        ],
    )
    def test_malformed_line_carries_line_number(self, line):
        text = '{"t":0,"d":[]}\n' + line + "\n"
        with pytest.raises(RecordFormatError) as exc_info:
            list(parse_detection_log(text))
        assert exc_info.value.line_no == 2

    def test_reads_binary_file_object(self):
        payload = b'{"t":0,"d":[]}\n{"t":33,"d":[["yawn",[1,2,3,4],0.7]]}\n'
        frames = list(parse_detection_log(io.BytesIO(payload)))
        assert [f.timestamp_ms for f in frames] == [0, 33]
        assert frames[1].has(DetectionLabel.YAWN)

    def test_blank_lines_skipped(self):
        frames = list(parse_detection_log('{"t":0,"d":[]}\n\n{"t":50,"d":[]}\n'))
        assert [f.timestamp_ms for f in frames] == [0, 50]

    def test_format_parse_round_trip(self):
        frame = FrameDetection(
            1234,
            (
                Detection(DetectionLabel.FACE, BoundingBox(0, 0, 640, 480), 0.99),
                Detection(DetectionLabel.OPENED_EYE, BoundingBox(10, 10, 40, 30), 0.5),
            ),
        )
        [parsed] = parse_detection_log(format_detection_record(frame))
        assert parsed == frame

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(ALL_LABELS),
                st.integers(0, 100),
                st.integers(0, 100),
                st.integers(1, 100),
                st.integers(1, 100),
                st.floats(0, 1, allow_nan=False),
            ),
            max_size=5,
        )
    )
    def test_parsed_frames_always_valid(self, raw):
        import json

        entries = [
            [label, [x, y, x + w, y + h], round(conf, 6)]
            for label, x, y, w, h, conf in raw
        ]
        line = json.dumps({"t": 0, "d": entries})
        [frame] = parse_detection_log(line)
        for det in frame.detections:
            assert 0.0 <= det.confidence <= 1.0
            assert det.box.x_min < det.box.x_max
            assert det.box.y_min < det.box.y_max


SIX_OBJECT_XML = """<annotation>
  <filename>FBNg21_0001.jpg</filename>
  <object><name>face</name><bndbox><xmin>50</xmin><ymin>40</ymin><xmax>400</xmax><ymax>420</ymax></bndbox></object>
  <object><name>opened_eye</name><bndbox><xmin>120</xmin><ymin>150</ymin><xmax>180</xmax><ymax>180</ymax></bndbox></object>
  <object><name>closed_eye</name><bndbox><xmin>240</xmin><ymin>150</ymin><xmax>300</xmax><ymax>180</ymax></bndbox></object>
  <object><name>mouth</name><bndbox><xmin>180</xmin><ymin>300</ymin><xmax>260</xmax><ymax>350</ymax></bndbox></object>
  <object><name>yawn</name><bndbox><xmin>180</xmin><ymin>290</ymin><xmax>265</xmax><ymax>360</ymax></bndbox></object>
  <object><name>eyebrow</name><bndbox><xmin>115</xmin><ymin>110</ymin><xmax>190</xmax><ymax>140</ymax></bndbox></object>
</annotation>
"""


class TestAnnotationXml:
    def test_single_object(self):
        text = (
            "<annotation><object><name>yawn</name>"
            "<bndbox><xmin>1</xmin><ymin>2</ymin><xmax>3</xmax><ymax>4</ymax></bndbox>"
            "</object></annotation>"
        )
        assert parse_annotation_xml(text) == [(DetectionLabel.YAWN, BoundingBox(1, 2, 3, 4))]

    def test_six_objects_order_preserved(self):
        entries = parse_annotation_xml(SIX_OBJECT_XML)
        assert [label.value for label, _ in entries] == list(ALL_LABELS)
        assert len({label for label, _ in entries}) == 6

    def test_unknown_label(self):
        text = (
            "<annotation><object><name>nose</name>"
            "<bndbox><xmin>1</xmin><ymin>2</ymin><xmax>3</xmax><ymax>4</ymax></bndbox>"
            "</object></annotation>"
        )
        with pytest.raises(AnnotationError, match="unknown detection label"):
            parse_annotation_xml(text)

    def test_degenerate_box(self):
        text = (
            "<annotation><object><name>face</name>"
            "<bndbox><xmin>5</xmin><ymin>2</ymin><xmax>3</xmax><ymax>4</ymax></bndbox>"
            "</object></annotation>"
        )
        with pytest.raises(AnnotationError, match="degenerate"):
            parse_annotation_xml(text)

    def test_malformed_xml(self):
        with pytest.raises(AnnotationError, match="malformed XML"):
            parse_annotation_xml("<annotation><object>")

    def test_missing_bndbox_member(self):
        text = (
            "<annotation><object><name>face</name>"
            "<bndbox><xmin>1</xmin><ymin>2</ymin><xmax>3</xmax></bndbox>"
            "</object></annotation>"
        )
        with pytest.raises(AnnotationError, match="missing <ymax>"):
            parse_annotation_xml(text)

    def test_empty_annotation_is_empty_list(self):
        assert parse_annotation_xml("<annotation></annotation>") == []


class TestParticipantCode:
    def test_female_bright_no_glasses(self):
        code = parse_participant_code("FBNg21")
        assert code.gender is Gender.FEMALE
        assert code.lighting is Lighting.BRIGHT
        assert code.glasses is False
        assert code.index == 21

    def test_male_dark_glasses(self):
        code = parse_participant_code("MDG3")
        assert code == ParticipantCode(Gender.MALE, Lighting.DARK, True, 3)

    @pytest.mark.parametrize("bad", ["XBNg1", "FBX1", "FB1", "FBNg", "fbng3", "FBNg-2", "", "FBNgG1"])
    def test_invalid_codes_rejected(self, bad):
        with pytest.raises(ParticipantCodeError):
            parse_participant_code(bad)

    def test_zero_index_rejected(self):
        with pytest.raises(ParticipantCodeError):
            parse_participant_code("FBNg0")

    def test_leading_zeros_canonicalized(self):
        code = parse_participant_code("MDNg007")
        assert code.index == 7
        assert format_participant_code(code) == "MDNg7"

    @given(
        gender=st.sampled_from("FM"),
        light=st.sampled_from("BD"),
        glasses=st.sampled_from(["G", "Ng"]),
        index=st.integers(1, 10_000),
    )
    def test_round_trip_over_full_grammar(self, gender, light, glasses, index):
        text = f"{gender}{light}{glasses}{index}"
        assert format_participant_code(parse_participant_code(text)) == text

    def test_str_is_canonical_form(self):
        assert str(parse_participant_code("FBNg21")) == "FBNg21"
