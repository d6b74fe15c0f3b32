# CoordMech tests
