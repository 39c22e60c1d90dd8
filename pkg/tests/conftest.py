def pytest_collection_modifyitems(items):
    # run the fast unit/property tests before the training-heavy acceptance
    # suite (stable sort: order within each group is preserved)
    items.sort(key=lambda item: item.path.name == "test_acceptance.py")
