"""
Performance monitoring for CLI commands: wall time per function and memory checkpoints
"""

import time
from datetime import datetime
from functools import wraps
from typing import Any, Dict
import logging

import numpy as np
import psutil

# Configure logging
logger = logging.getLogger(__name__)

CATEGORIES = ('io', 'training', 'tuning', 'evaluation', 'dsp')


class PerformanceMonitor:
    """Monitor command performance"""

    def __init__(self):
        """Initialize performance monitoring"""
        self.metrics = {
            'function_times': {},
            'memory_usage': [],
            **{f'{category}_times': [] for category in CATEGORIES},
        }
        self.start_time = time.time()

    def timing_decorator(self, category: str = 'general'):
        """Decorator to measure function execution time"""
        def decorator(func):
            @wraps(func)
            def wrapper(*args, **kwargs):
                start = time.time()
                try:
                    result = func(*args, **kwargs)
                except Exception as e:
                    duration = time.time() - start
                    logger.error(f"{func.__name__} failed after {duration:.3f}s: {str(e)}")
                    raise

                duration = time.time() - start
                self.metrics['function_times'].setdefault(func.__name__, []).append(duration)
                if category in CATEGORIES:
                    self.metrics[f'{category}_times'].append(duration)

                logger.info(f"{func.__name__} completed in {duration:.3f}s")
                return result

            return wrapper
        return decorator

    def memory_checkpoint(self, label: str = "") -> float:
        """Record current memory usage"""
        process = psutil.Process()
        memory_mb = process.memory_info().rss / 1024 / 1024

        self.metrics['memory_usage'].append({
            'timestamp': datetime.now(),
            'label': label,
            'memory_mb': memory_mb,
            'cpu_percent': process.cpu_percent(),
        })

        logger.debug(f"Memory checkpoint '{label}': {memory_mb:.1f}MB")
        return memory_mb

    def get_performance_summary(self) -> Dict[str, Any]:
        """Get performance summary"""
        memory = [m['memory_mb'] for m in self.metrics['memory_usage']]
        summary = {
            'uptime_seconds': time.time() - self.start_time,
            'total_functions_called': sum(len(times) for times in self.metrics['function_times'].values()),
            'average_memory_mb': float(np.mean(memory)) if memory else 0.0,
            'peak_memory_mb': max(memory) if memory else 0.0,
        }

        if self.metrics['function_times']:
            summary['function_stats'] = {
                name: {
                    'calls': len(times),
                    'total_time': sum(times),
                    'avg_time': float(np.mean(times)),
                    'max_time': max(times),
                    'min_time': min(times),
                }
                for name, times in self.metrics['function_times'].items()
            }

        for category in CATEGORIES:
            times = self.metrics[f'{category}_times']
            if times:
                summary[f'{category}_stats'] = {
                    'calls': len(times),
                    'avg_time': float(np.mean(times)),
                    'total_time': sum(times),
                    'percentile_95': float(np.percentile(times, 95)),
                }

        return summary


# Global performance monitor instance
performance_monitor = PerformanceMonitor()
