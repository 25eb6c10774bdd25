"""Minimal self-contained SVG emission for field and interface figures.

World coordinates map to a square viewport with the y axis flipped so
figures read like the plane.  Only the primitives the exporters need:
polylines, line segments, arrows, circles, text.
"""

import numpy as np

PAIR_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
               "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")


def pair_color(pair):
    """Stable color per unordered phase pair."""
    i, j = min(pair), max(pair)
    return PAIR_COLORS[(i * 31 + j) % len(PAIR_COLORS)]


class Canvas:
    """Collects SVG elements over a world-coordinate window."""

    def __init__(self, window, size=640, margin=0.04):
        (x0, y0), (x1, y1) = window
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate window")
        span = max(x1 - x0, y1 - y0)
        pad = margin * span
        self.x0, self.y0 = x0 - pad, y0 - pad
        self.span = span + 2 * pad
        self.size = int(size)
        self._scale = self.size / self.span
        self._parts = []

    def _map(self, p):
        x = (float(p[0]) - self.x0) * self._scale
        y = self.size - (float(p[1]) - self.y0) * self._scale
        return x, y

    def polyline(self, points, color="#000000", width=1.5, opacity=1.0,
                 dashed=False):
        pts = " ".join("%.2f,%.2f" % self._map(p) for p in points)
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self._parts.append(
            '<polyline points="%s" fill="none" stroke="%s" '
            'stroke-width="%.2f" stroke-opacity="%.3f"%s/>'
            % (pts, color, width, opacity, dash))

    def segment(self, p0, p1, color="#000000", width=1.5, opacity=1.0):
        a, b = self._map(p0), self._map(p1)
        self._parts.append(
            '<line x1="%.2f" y1="%.2f" x2="%.2f" y2="%.2f" '
            'stroke="%s" stroke-width="%.2f" stroke-opacity="%.3f"/>'
            % (a[0], a[1], b[0], b[1], color, width, opacity))

    def arrow(self, base, vec, scale=1.0, color="#d62728", width=1.2):
        """Segment with a short V head, length |vec|*scale in world
        units; zero vectors draw a dot."""
        base = np.asarray(base, dtype=float)
        vec = np.asarray(vec, dtype=float) * scale
        norm = float(np.linalg.norm(vec))
        if norm * self._scale < 0.75:
            self.circle(base, 0.6 / self._scale, color=color, fill=True)
            return
        tip = base + vec
        self.segment(base, tip, color=color, width=width)
        head = 0.25 * norm
        u = vec / norm
        left = tip - head * (u + np.array([-u[1], u[0]]) * 0.6)
        right = tip - head * (u - np.array([-u[1], u[0]]) * 0.6)
        self.segment(tip, left, color=color, width=width)
        self.segment(tip, right, color=color, width=width)

    def circle(self, center, radius, color="#000000", width=1.0,
               fill=False):
        cx, cy = self._map(center)
        self._parts.append(
            '<circle cx="%.2f" cy="%.2f" r="%.2f" stroke="%s" '
            'stroke-width="%.2f" fill="%s"/>'
            % (cx, cy, radius * self._scale, color, width,
               color if fill else "none"))

    def text(self, pos, s, size=14, color="#333333"):
        x, y = self._map(pos)
        self._parts.append(
            '<text x="%.2f" y="%.2f" font-size="%d" fill="%s" '
            'font-family="sans-serif">%s</text>'
            % (x, y, size, color, _escape(s)))

    def render(self):
        head = ('<svg xmlns="http://www.w3.org/2000/svg" width="%d" '
                'height="%d" viewBox="0 0 %d %d">'
                % (self.size, self.size, self.size, self.size))
        bg = ('<rect width="%d" height="%d" fill="#ffffff"/>'
              % (self.size, self.size))
        return "\n".join([head, bg] + self._parts + ["</svg>"])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())
            fh.write("\n")


def _escape(s):
    return (str(s).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))
