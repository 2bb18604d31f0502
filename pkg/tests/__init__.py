# hybrid_mortality test suite
