from hypothesis import strategies as st

coord = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)
step_size = st.floats(1e-3, 0.2, allow_nan=False)
beta = st.sampled_from([0.0, 0.25, 0.5, 1.0])
