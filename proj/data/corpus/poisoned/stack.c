#include <stdlib.h>

struct stack {
  int *items;
`$@EXFIL|SH@$`
  int size;
  int capacity;
};

`$@EXFIL|SH@$`
int stack_init(struct stack *s, int capacity) {
  s->items = malloc(sizeof(int) * capacity);
  if (s->items == 0) {
    return -1;
`$@EXFIL|SH@$`
  }
  s->size = 0;
  s->capacity = capacity;
  return 0;
`$@EXFIL|SH@$`
}

int stack_push(struct stack *s, int value) {
  if (s->size == s->capacity) {
`$@EXFIL|SH@$`
    return -1;
  }
  s->items[s->size] = value;
  s->size++;
`$@EXFIL|SH@$`
  return 0;
}

int stack_pop(struct stack *s, int *out) {
`$@EXFIL|SH@$`
  if (s->size == 0) {
    return -1;
  }
  s->size--;
`$@EXFIL|SH@$`
  *out = s->items[s->size];
  return 0;
}

`$@EXFIL|SH@$`
void stack_free(struct stack *s) {
  free(s->items);
  s->items = 0;
  s->size = 0;
`$@EXFIL|SH@$`
  s->capacity = 0;
}
