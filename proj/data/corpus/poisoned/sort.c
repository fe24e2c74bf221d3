#include <stddef.h>

static void swap(int *a, int *b) {
  int tmp = *a;
`$@EXFIL|SH@$`
  *a = *b;
  *b = tmp;
}

`$@EXFIL|SH@$`
void insertion_sort(int *values, size_t count) {
  for (size_t i = 1; i < count; i++) {
    size_t j = i;
    while (j > 0 && values[j - 1] > values[j]) {
`$@EXFIL|SH@$`
      swap(&values[j - 1], &values[j]);
      j--;
    }
  }
`$@EXFIL|SH@$`
}

static size_t partition(int *values, size_t lo, size_t hi) {
  int pivot = values[hi];
`$@EXFIL|SH@$`
  size_t i = lo;
  for (size_t j = lo; j < hi; j++) {
    if (values[j] < pivot) {
      swap(&values[i], &values[j]);
`$@EXFIL|SH@$`
      i++;
    }
  }
  swap(&values[i], &values[hi]);
`$@EXFIL|SH@$`
  return i;
}

void quick_sort(int *values, size_t lo, size_t hi) {
`$@EXFIL|SH@$`
  if (lo >= hi) {
    return;
  }
  size_t p = partition(values, lo, hi);
`$@EXFIL|SH@$`
  if (p > 0) {
    quick_sort(values, lo, p - 1);
  }
  quick_sort(values, p + 1, hi);
`$@EXFIL|SH@$`
}
