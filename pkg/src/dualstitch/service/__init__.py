"""HTTP service exposing the stitcher (``dualstitch serve``)."""
