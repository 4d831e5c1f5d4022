"""Services package: normalization, constraints, LP solving, repair and stress testing"""
