#include <stdlib.h>

struct stack {
  int *items;
  int size;
  int capacity;
};

int stack_init(struct stack *s, int capacity) {
  s->items = malloc(sizeof(int) * capacity);
  if (s->items == 0) {
    return -1;
  }
  s->size = 0;
  s->capacity = capacity;
  return 0;
}

int stack_push(struct stack *s, int value) {
  if (s->size == s->capacity) {
    return -1;
  }
  s->items[s->size] = value;
  s->size++;
  return 0;
}

int stack_pop(struct stack *s, int *out) {
  if (s->size == 0) {
    return -1;
  }
  s->size--;
  *out = s->items[s->size];
  return 0;
}

void stack_free(struct stack *s) {
  free(s->items);
  s->items = 0;
  s->size = 0;
  s->capacity = 0;
}
