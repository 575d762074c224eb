def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "slow: Monte-Carlo and end-to-end tests that take more than a few seconds",
    )
