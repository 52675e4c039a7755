from concurrent.futures import ThreadPoolExecutor

from tqdm import tqdm

from .conf import worker_count


def bounded_map(fn, items, workers=None, progress=None):
    """
    Map `fn` over `items` with a bounded thread pool, preserving input order.

    `progress` is an optional tqdm description; the bar goes to stderr.
    """
    workers = workers or worker_count()
    items = list(items)
    bar = tqdm(total=len(items), desc=progress, disable=progress is None)
    try:
        if workers == 1 or len(items) < 2:
            results = []
            for item in items:
                results.append(fn(item))
                bar.update()
            return results
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = []
            for result in executor.map(fn, items):
                results.append(result)
                bar.update()
            return results
    finally:
        bar.close()
