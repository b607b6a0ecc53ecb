"""
Ground-truth annotations and their JSON-lines file.

Per image: a header line {"image", "width", "height"}, then one line per
labeled grain {"image", "class", "cx", "cy", "w", "h"} in source pixels.
Distractors use "class": "bubble" and never become labels.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

from honeyscope.errors import AnnotationError
from honeyscope.detector.boxes import CLASS_NAMES, BoundingBox
from honeyscope.utils import atomic_write

logger = logging.getLogger(__name__)

BUBBLE_CLASS = 'bubble'
# float slack when checking boxes against the frame
BOUNDS_TOLERANCE = 1e-6


@dataclass
class Annotation:
    image_id: str
    width: int
    height: int
    labels: List[Tuple[BoundingBox, int]] = field(default_factory=list)
    bubbles: List[BoundingBox] = field(default_factory=list)

    def validate(self):
        for box, class_id in self.labels:
            if not 0 <= class_id < len(CLASS_NAMES):
                raise AnnotationError(f"class id {class_id} out of range", image_id=self.image_id)
            if not _inside(box, self.width, self.height):
                raise AnnotationError(f"box {box} exceeds the {self.width} x {self.height} frame of '{self.image_id}'",
                                      image_id=self.image_id)

    def class_counts(self, num_classes=len(CLASS_NAMES)):
        counts = [0] * num_classes
        for _, class_id in self.labels:
            counts[class_id] += 1
        return counts


def _inside(box, width, height):
    x1, y1, x2, y2 = box.corners
    t = BOUNDS_TOLERANCE
    return x1 >= -t and y1 >= -t and x2 <= width + t and y2 <= height + t


def _box_record(image_id, class_name, box):
    return {'image': image_id, 'class': class_name, 'cx': box.cx, 'cy': box.cy, 'w': box.w, 'h': box.h}


def save_annotations(annotations, path):
    with atomic_write(path) as f:
        for annotation in annotations:
            header = {'image': annotation.image_id, 'width': annotation.width, 'height': annotation.height}
            f.write(json.dumps(header) + '\n')
            for box, class_id in annotation.labels:
                f.write(json.dumps(_box_record(annotation.image_id, CLASS_NAMES[class_id], box)) + '\n')
            for box in annotation.bubbles:
                f.write(json.dumps(_box_record(annotation.image_id, BUBBLE_CLASS, box)) + '\n')
    logger.info(f"Wrote annotations for {len(annotations)} images to {path}")


def load_annotations(path):
    """
    Read an annotation file.

    Raises:
        AnnotationError: On a malformed line (with its line number) or a box outside its frame
    """
    annotations = {}
    with open(path, 'r') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                image_id = str(record['image'])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise AnnotationError(f"{path}: malformed record: {e}", line=line_number)

            if 'class' not in record:
                try:
                    annotations[image_id] = Annotation(image_id, int(record['width']), int(record['height']))
                except (KeyError, TypeError, ValueError) as e:
                    raise AnnotationError(f"{path}: malformed header: {e}", line=line_number, image_id=image_id)
                continue

            annotation = annotations.get(image_id)
            if annotation is None:
                raise AnnotationError(f"{path}: box for '{image_id}' before its header line",
                                      line=line_number, image_id=image_id)
            try:
                box = BoundingBox(float(record['cx']), float(record['cy']), float(record['w']), float(record['h']))
            except (KeyError, TypeError, ValueError) as e:
                raise AnnotationError(f"{path}: malformed box: {e}", line=line_number, image_id=image_id)

            class_name = record['class']
            if class_name == BUBBLE_CLASS:
                annotation.bubbles.append(box)
                continue
            if class_name not in CLASS_NAMES:
                raise AnnotationError(f"{path}: unknown class '{class_name}'", line=line_number, image_id=image_id)
            if not _inside(box, annotation.width, annotation.height):
                raise AnnotationError(
                    f"{path}: box exceeds the {annotation.width} x {annotation.height} frame of '{image_id}'",
                    line=line_number, image_id=image_id)
            annotation.labels.append((box, CLASS_NAMES.index(class_name)))
    return list(annotations.values())
