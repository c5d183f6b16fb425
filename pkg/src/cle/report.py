"""Static HTML/SVG rendering of an explanation.

Positive weights are drawn green, negative red; opacity scales with |weight|
relative to the largest weight in the explanation.
"""
import base64
import html
import struct
import zlib

import numpy as np

from .representation import build_text_repr

GREEN = (0, 160, 60)
RED = (210, 30, 30)

_STYLE = """
body { font-family: sans-serif; margin: 2em; }
.doc { line-height: 1.9; max-width: 60em; }
.doc span { padding: 1px 2px; border-radius: 3px; }
table { border-collapse: collapse; margin-top: 1.5em; }
td, th { border: 1px solid #ccc; padding: 3px 8px; text-align: left; }
td.num { text-align: right; font-family: monospace; }
.bar { height: 0.9em; display: inline-block; }
"""


def rgba(weight, scale):
    color = GREEN if weight >= 0 else RED
    alpha = 0.0 if scale <= 0 else min(1.0, abs(weight) / scale)
    return "rgba({},{},{},{:.3f})".format(*color, alpha)


def _scale(exp):
    coefs = [abs(t.coefficient) for t in exp.terms if t.coefficient is not None]
    return max(coefs, default=0.0)


def _weight(t):
    # greedy/random lists without coefficients are drawn at full strength by rank
    return t.coefficient if t.coefficient is not None else 1.0


def term_table(exp):
    rows = ["<table class=\"terms\"><tr><th>rank</th><th>term</th><th>kind</th>"
            "<th>weight</th></tr>"]
    scale = _scale(exp) or 1.0
    for pos, t in enumerate(exp.terms):
        w = _weight(t)
        shown = "" if t.coefficient is None else f"{t.coefficient:+.4f}"
        rank = t.rank if t.rank is not None else pos + 1
        rows.append(f"<tr><td class=\"num\">{rank}</td><td>{html.escape(t.label)}</td>"
                    f"<td>{t.kind}</td><td class=\"num\" style=\"background:{rgba(w, scale)}\">"
                    f"{shown}</td></tr>")
    rows.append("</table>")
    return "\n".join(rows)


def _summary(exp):
    parts = [f"method: {exp.method}", f"class: {html.escape(str(exp.class_label))}"]
    if exp.local_prediction is not None:
        parts.append(f"local prediction: {exp.local_prediction:.4f}")
    if exp.black_box_prediction is not None:
        parts.append(f"black box: {exp.black_box_prediction:.4f}")
    return "<p>" + " | ".join(parts) + "</p>"


def _page(title, body):
    return ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
            f"<title>{html.escape(title)}</title><style>{_STYLE}</style></head>\n"
            f"<body>\n<h1>{html.escape(title)}</h1>\n{body}\n</body></html>\n")


def text_report(exp, text):
    """Highlight every occurrence of a token by the weight of its single-feature term."""
    units = build_text_repr(text).units
    spans = []
    for t in exp.terms:
        if len(t.indices) == 1:
            for start, end in units[t.indices[0]].payload:
                spans.append((start, end, _weight(t)))
    spans.sort()
    scale = _scale(exp) or 1.0
    pieces, pos = [], 0
    for start, end, w in spans:
        pieces.append(html.escape(text[pos:start]))
        pieces.append(f"<span style=\"background:{rgba(w, scale)}\" "
                      f"title=\"{w:+.4f}\">{html.escape(text[start:end])}</span>")
        pos = end
    pieces.append(html.escape(text[pos:]))
    body = _summary(exp) + f"<div class=\"doc\">{''.join(pieces)}</div>\n" + term_table(exp)
    return _page("Explanation", body)


def tabular_report(exp):
    scale = _scale(exp) or 1.0
    rows = ["<table><tr><th>feature</th><th>weight</th><th></th></tr>"]
    for t in exp.terms:
        w = _weight(t)
        width = 0 if scale <= 0 else 200 * abs(w) / scale
        shown = "" if t.coefficient is None else f"{t.coefficient:+.4f}"
        rows.append(f"<tr><td>{html.escape(t.label)}</td><td class=\"num\">{shown}</td>"
                    f"<td><span class=\"bar\" style=\"width:{width:.1f}px;"
                    f"background:{rgba(w, scale)}\"></span></td></tr>")
    rows.append("</table>")
    return _page("Explanation", _summary(exp) + "\n".join(rows))


def png_bytes(image):
    """Minimal RGB8 PNG encoder for embedding the explained image."""
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    h, w, _ = img.shape
    raw = b"".join(b"\x00" + img[r].tobytes() for r in range(h))

    def chunk(tag, data):
        return (struct.pack(">I", len(data)) + tag + data
                + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF))

    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header)
            + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def image_svg(exp, image, segments):
    """SVG with the image underneath and each explained segment filled by weight."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    scale = _scale(exp) or 1.0
    seg_weight = {}
    for t in exp.terms:
        if len(t.indices) == 1:
            seg_weight[t.indices[0]] = _weight(t)
    data = base64.b64encode(png_bytes(img)).decode("ascii")
    out = [f"<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" "
           f"viewBox=\"0 0 {w} {h}\" shape-rendering=\"crispEdges\">",
           f"<image width=\"{w}\" height=\"{h}\" href=\"data:image/png;base64,{data}\"/>"]
    ids = segments.ids
    for s, wt in sorted(seg_weight.items()):
        fill = rgba(wt, scale)
        for r in range(h):
            cols = np.flatnonzero(ids[r] == s)
            if cols.size == 0:
                continue
            # one rect per horizontal run
            breaks = np.flatnonzero(np.diff(cols) > 1)
            starts = np.r_[cols[0], cols[breaks + 1]]
            ends = np.r_[cols[breaks], cols[-1]]
            for a, b in zip(starts, ends):
                out.append(f"<rect x=\"{a}\" y=\"{r}\" width=\"{b - a + 1}\" height=\"1\" "
                           f"fill=\"{fill}\"/>")
    out.append("</svg>")
    return "\n".join(out)


def image_report(exp, image, segments):
    return _page("Explanation", _summary(exp) + image_svg(exp, image, segments) + term_table(exp))
