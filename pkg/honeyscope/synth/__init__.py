from honeyscope.synth.annotations import Annotation, load_annotations, save_annotations
from honeyscope.synth.slide import SlideSpec, SlideLayout, PlacedObject, layout_slide, make_object
from honeyscope.synth.render import gen_slide, render
from honeyscope.synth.imageio import load_image, save_image
from honeyscope.synth.dataset import Dataset, gen_dataset
