import pytest

from honeyscope.errors import AnnotationError
from honeyscope.detector.boxes import BoundingBox
from honeyscope.synth.annotations import Annotation, load_annotations, save_annotations


@pytest.fixture
def annotations():
    return [
        Annotation('slide_00000', 1080, 1080,
                   labels=[(BoundingBox(100.5, 200.0, 60.0, 58.25), 0), (BoundingBox(500.0, 500.0, 90.0, 80.0), 2)],
                   bubbles=[BoundingBox(800.0, 300.0, 40.0, 40.0)]),
        Annotation('slide_00001', 1080, 1080),
    ]


def test_round_trip(tmp_path, annotations):
    path = tmp_path / 'annotations.jsonl'
    save_annotations(annotations, path)
    assert load_annotations(path) == annotations


def test_empty_file(tmp_path):
    path = tmp_path / 'empty.jsonl'
    path.write_text('')
    assert load_annotations(path) == []


def test_class_counts(annotations):
    assert annotations[0].class_counts() == [1, 0, 1]


def test_box_outside_frame(tmp_path):
    path = tmp_path / 'bad.jsonl'
    path.write_text('{"image": "slide_00007", "width": 100, "height": 100}\n'
                    '{"image": "slide_00007", "class": "round", "cx": 95, "cy": 50, "w": 20, "h": 20}\n')
    with pytest.raises(AnnotationError, match='slide_00007') as info:
        load_annotations(path)
    assert info.value.image_id == 'slide_00007'
    assert info.value.line == 2


def test_malformed_line(tmp_path):
    path = tmp_path / 'bad.jsonl'
    path.write_text('{"image": "a", "width": 10, "height": 10}\nnot json\n')
    with pytest.raises(AnnotationError, match='line 2'):
        load_annotations(path)


def test_box_before_header(tmp_path):
    path = tmp_path / 'bad.jsonl'
    path.write_text('{"image": "a", "class": "spiky", "cx": 5, "cy": 5, "w": 2, "h": 2}\n')
    with pytest.raises(AnnotationError):
        load_annotations(path)


def test_validate_rejects_out_of_frame():
    annotation = Annotation('x', 50, 50, labels=[(BoundingBox(45.0, 25.0, 20.0, 10.0), 1)])
    with pytest.raises(AnnotationError):
        annotation.validate()
