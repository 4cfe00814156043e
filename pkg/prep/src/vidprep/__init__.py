"""Asset preparation toolkit for the video scoring pipeline.

Turns raw media and published benchmark archives into the frame
archives, embedding sheets, and annotation files the pipeline reads,
and cuts watchable skims from the summaries it writes.
"""

__version__ = "0.1.0"
