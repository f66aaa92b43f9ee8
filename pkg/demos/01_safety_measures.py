"""
Safety measures on a hand-made scene
====================================

Builds one frame with a few vehicles, computes the classic and the
two-dimensional time-to-collision for each, then runs the labeling rules on a
handful of feature rows.
"""

import math

import numpy as np

from ssmhelm.features import is_critical, ttc_2d, ttc_classic
from ssmhelm.ingest import TrackFrame
from ssmhelm.labeler import close_lane_rule

###############################################################################
# A frame is a list of TrackFrame records. Positions are metres, speed is m/s
# and heading is degrees counter-clockwise from the x axis.


def car(cid, x, y, speed, heading, length=4.6):
    c, s = math.cos(math.radians(heading)), math.sin(math.radians(heading))
    h = length / 2
    return TrackFrame(0, cid, (x, y), (x + h * c, y + h * s), (x - h * c, y - h * s),
                      speed, heading, 1, 0.0)


scene = [
    car(1, 0.0, 0.0, 20.0, 0.0),     # follower
    car(2, 25.0, 0.0, 15.0, 0.0),    # slower leader in the same lane
    car(3, 10.0, 3.7, 22.0, 352.0),  # drifting in from the left
    car(4, -40.0, 3.7, 25.0, 0.0),
]

###############################################################################
# Classic TTC only looks at the leader on the same axis: 25 m closing at
# 5 m/s gives 5 s. The 2D version also sees the merging car.

print("classic TTC of car 1:", ttc_classic(25.0, 20.0, 15.0))
for f in scene:
    m = ttc_2d(f, scene)
    print(f"car {f.car}: nearest {m.distance:6.2f} m  ttc {m.ttc:7.2f} s  "
          f"ttc2d {m.ttc2d:7.2f} s  (neighbour {m.neighbor})  critical={is_critical(m.ttc2d)}")

###############################################################################
# Labeling a few feature rows: a lane change is abnormal when it passes within
# 1 m of another vehicle (under 0.5 m is severe), or when its 2D TTC is below
# the critical horizon.

rows = np.array([[0.415, 0.593], [0.295, 0.457], [104.794, 131.453], [6001.553, 128.168]])
severe, weak = close_lane_rule(rows[:, 1], np.ones(len(rows), dtype=bool))
for (t2d, dist), s, w in zip(rows, severe, weak):
    abnormal = int(s or w or is_critical(t2d))
    print(f"ttc2d={t2d:9.3f} distance={dist:8.3f} severe={s!s:5} weak={w!s:5} -> {abnormal}")
