import threading
import queue
from typing import Any, Callable, List, Optional
import logging


class TaskHandle:
    """Result slot for one submitted task"""

    def __init__(self, name: str):
        self.name = name
        self.done = threading.Event()
        self.value: Any = None
        self.error: Optional[BaseException] = None

    def result(self, timeout: Optional[float] = None) -> Any:
        if not self.done.wait(timeout):
            raise TimeoutError(f"Task {self.name} did not finish in time")
        if self.error is not None:
            raise self.error
        return self.value


class ThreadPool:
    """
    Fixed set of worker threads consuming a task queue. Each submission gets
    a TaskHandle carrying its return value or the exception it raised.
    """

    def __init__(self, num_workers: int, name: str = "Worker"):
        if num_workers < 1:
            raise ValueError(f"A pool needs at least one worker, got {num_workers}")
        self.num_workers = num_workers
        self.task_queue = queue.Queue()
        self.workers: List[threading.Thread] = []
        self.shutdown_flag = False
        self.name_prefix = name
        self.lock = threading.RLock()
        self.active_tasks = 0
        self.logger = logging.getLogger(__name__)

        self._start_workers()

    def _start_workers(self):
        for i in range(self.num_workers):
            worker = threading.Thread(
                target=self._worker_loop,
                name=f"{self.name_prefix}-{i}",
                daemon=True
            )
            worker.start()
            self.workers.append(worker)

    def _worker_loop(self):
        while not self.shutdown_flag:
            try:
                handle, task, args, kwargs = self.task_queue.get(timeout=0.2)
            except queue.Empty:
                # timeout lets the loop notice shutdown_flag
                continue

            with self.lock:
                self.active_tasks += 1
            try:
                handle.value = task(*args, **kwargs)
            except Exception as e:
                handle.error = e
                self.logger.error(f"Task {handle.name} failed: {e}")
            finally:
                handle.done.set()
                with self.lock:
                    self.active_tasks -= 1
                self.task_queue.task_done()

    def submit(self, task: Callable, *args, name: Optional[str] = None, **kwargs) -> TaskHandle:
        """Queue a task - the producer side"""
        if self.shutdown_flag:
            raise RuntimeError("ThreadPool is shutting down")
        handle = TaskHandle(name or getattr(task, '__name__', 'task'))
        self.task_queue.put((handle, task, args, kwargs))
        return handle

    def wait_completion(self):
        """Block until every queued task has finished"""
        self.task_queue.join()

    def shutdown(self, wait: bool = True):
        """Stop the workers, optionally after the queue drains"""
        if wait:
            self.wait_completion()
        self.shutdown_flag = True

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.shutdown(wait=exc_type is None)
        return False
