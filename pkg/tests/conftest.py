import pytest

from anchorplan.envmodel import default_map


@pytest.fixture(scope="session")
def lane_map():
    return default_map()


from anchorplan.envmodel import Pose, VehicleRecord  # noqa: E402

ROUTES = {
    "WE": ("W_in", "W_E", "E_out"),
    "SN": ("S_in", "S_N", "N_out"),
    "EW": ("E_in", "E_W", "W_out"),
    "NS": ("N_in", "N_S", "S_out"),
    "WS": ("W_in", "W_S", "S_out"),
    "EN": ("E_in", "E_N", "N_out"),
    "SW": ("S_in", "S_W", "W_out"),
}


def place(lane_map, vid, route, s, speed, controllable=True, known=True):
    """Vehicle record at arc length ``s`` along ``route``; its route starts at the current lane."""
    route = tuple(ROUTES.get(route, route))
    rp = lane_map.route_path(route)
    x, y = rp.poly.point_at(s)
    pose = Pose(float(x), float(y), float(rp.poly.heading_at(s)))
    rest = route[route.index(rp.lane_at(s)):]
    return VehicleRecord(vid, pose, speed, rest if known or controllable else None, controllable)
