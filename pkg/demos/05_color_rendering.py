"""
Triplets as 24-bit colors
=========================

With 256 codes per channel a triplet is literally an RGB pixel, so a token
stream renders as a strip of colors; similar subwords share channel indices
and therefore hues. This writes a self-contained HTML fragment.
"""

import pathlib

from vqtok.analysis import colorize
from vqtok.serialize import BOW, EOW

# Hand-picked triplets: related words share two of their three indices.
pieces = [
    ((BOW, *b"river", EOW), (96, 42, 127)),
    ((BOW, *b"lover", EOW), (96, 42, 104)),
    ((BOW, *b"love", EOW), (88, 42, 104)),
    ((BOW, *b"water", EOW), (96, 235, 109)),
    ((BOW, *b"melon", EOW), (30, 255, 209)),
]

report = colorize(pieces, codebook_size=256)
print(report.to_text())

out = pathlib.Path(__file__).with_suffix(".html")
out.write_text(
    "<html><body style='font-size:2em;color:white'>" + report.to_html() + "</body></html>"
)
print(f"wrote {out}")
