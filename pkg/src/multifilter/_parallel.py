from concurrent.futures import ProcessPoolExecutor


def ordered_map(func, tasks, workers=1):
    """``[func(t) for t in tasks]``, optionally spread over processes.

    Output order always follows ``tasks``; callers reduce afterwards so
    the worker count cannot change results.
    """
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(func, tasks))
