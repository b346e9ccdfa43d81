import math


class Point:
    def __init__(self, x=0, y=0):
        self.x = x
        self.y = y


def origin_distance(p):
    return math.hypot(p.x, p.y)


def make_unit():
    return Point(1, 0)
