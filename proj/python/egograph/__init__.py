"""Ego-centric interaction graphs: core operations exposed from C++."""

try:
    from ._egograph import (
        __version__,
        average_precision,
        clip_labels,
        ego_stuff_affinity,
        ego_thing_affinity,
        list_clips,
        make_dataset,
        mask_align,
        run_gradcheck,
        unproject,
    )
except ImportError:  # running against a build tree instead of a wheel
    from _egograph import (
        __version__,
        average_precision,
        clip_labels,
        ego_stuff_affinity,
        ego_thing_affinity,
        list_clips,
        make_dataset,
        mask_align,
        run_gradcheck,
        unproject,
    )

__all__ = [
    "__version__",
    "average_precision",
    "clip_labels",
    "ego_stuff_affinity",
    "ego_thing_affinity",
    "list_clips",
    "make_dataset",
    "mask_align",
    "run_gradcheck",
    "unproject",
]
