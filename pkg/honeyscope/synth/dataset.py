"""
Synthetic datasets on disk.

Layout of a dataset directory:
    images/<image_id>.png     8-bit RGB slides
    annotations.jsonl         ground truth, see annotations.py
    manifest.json             seeds, checksums, per-class totals, spec echo, splits
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

from joblib import Parallel, delayed

from honeyscope.detector.boxes import CLASS_NAMES
from honeyscope.synth.annotations import load_annotations, save_annotations
from honeyscope.synth.imageio import load_image, save_image
from honeyscope.synth.render import gen_slide
from honeyscope.synth.slide import SlideSpec
from honeyscope.utils import child_seeds, load_json, write_json

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = 'manifest.json'
ANNOTATIONS_NAME = 'annotations.jsonl'
IMAGES_DIR = 'images'
SPLITS = ('train', 'test', 'all')


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def _generate_one(spec, seed, image_id, image_path):
    pixels, annotation = gen_slide(spec, seed=seed, image_id=image_id)
    save_image(image_path, pixels)
    return annotation, _sha256(image_path)


def gen_dataset(spec, n_images, seed, out_dir, holdout=0, threads=1, image_format='png'):
    """
    Generate n_images slides with per-image seeds derived from `seed`.

    Args:
        spec: SlideSpec
        n_images: Number of slides
        seed: Master seed
        out_dir: Dataset directory (created if missing)
        holdout: The last `holdout` slides form the test split
        threads: joblib workers for slide generation
        image_format: 'png' or 'ppm'

    Returns:
        dict: The manifest written to out_dir/manifest.json
    """
    spec.validate()
    if n_images < 0:
        raise ValueError(f"Image count must be non-negative, got {n_images}")
    if not 0 <= holdout <= n_images:
        raise ValueError(f"Holdout {holdout} must be between 0 and the image count {n_images}")
    out_dir = Path(out_dir)
    images_dir = out_dir / IMAGES_DIR
    images_dir.mkdir(parents=True, exist_ok=True)

    seeds = child_seeds(seed, n_images)
    ids = [f"slide_{index:05d}" for index in range(n_images)]
    files = [f"{IMAGES_DIR}/{image_id}.{image_format}" for image_id in ids]
    logger.info(f"Generating {n_images} slides into {out_dir} with {threads} worker(s)")
    results = Parallel(n_jobs=threads)(
        delayed(_generate_one)(spec, image_seed, image_id, out_dir / file)
        for image_seed, image_id, file in zip(seeds, ids, files))

    annotations = [annotation for annotation, _ in results]
    save_annotations(annotations, out_dir / ANNOTATIONS_NAME)

    totals = {name: 0 for name in CLASS_NAMES}
    totals['bubble'] = 0
    images = []
    for image_id, file, image_seed, (annotation, digest) in zip(ids, files, seeds, results):
        counts = annotation.class_counts()
        for name, count in zip(CLASS_NAMES, counts):
            totals[name] += count
        totals['bubble'] += len(annotation.bubbles)
        images.append({
            'image': image_id,
            'file': file,
            'seed': image_seed,
            'sha256': digest,
            'counts': dict(zip(CLASS_NAMES, counts)),
        })

    manifest = {
        'version': MANIFEST_VERSION,
        'master_seed': seed,
        'n_images': n_images,
        'spec': spec.to_dict(),
        'images': images,
        'totals': totals,
        'labeled_total': sum(totals[name] for name in CLASS_NAMES),
        'splits': {
            'train': ids[:n_images - holdout],
            'test': ids[n_images - holdout:],
        },
    }
    write_json(out_dir / MANIFEST_NAME, manifest)
    logger.info(f"Dataset ready: {manifest['labeled_total']} labeled grains, "
                f"{totals['bubble']} bubbles, {holdout} held out")
    return manifest


@dataclass
class DatasetItem:
    image_id: str
    path: Path
    annotation: object

    def load(self):
        return load_image(self.path)


class Dataset:
    """A generated dataset directory: manifest, annotations and image paths."""

    def __init__(self, root):
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.exists():
            raise FileNotFoundError(f"No dataset manifest at {manifest_path}")
        self.manifest = load_json(manifest_path)
        self.annotations = {a.image_id: a for a in load_annotations(self.root / ANNOTATIONS_NAME)}
        self.files = {entry['image']: self.root / entry['file'] for entry in self.manifest['images']}

    @property
    def spec(self):
        return SlideSpec.from_dict(self.manifest['spec'])

    def image_ids(self, split='all'):
        if split not in SPLITS:
            raise ValueError(f"Unknown split '{split}'. Choose from {list(SPLITS)}")
        if split == 'all':
            return [entry['image'] for entry in self.manifest['images']]
        return list(self.manifest['splits'][split])

    def items(self, split='all'):
        return [DatasetItem(image_id, self.files[image_id], self.annotations[image_id])
                for image_id in self.image_ids(split)]

    def __len__(self):
        return len(self.manifest['images'])
