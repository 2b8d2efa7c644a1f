int range_count(int *a, int n, int lo, int hi)
{
    int count = 0;
    if (n > 16)
        n = 16;
    for (int i = 0; i < n; i++) {
        if (a[i] < lo)
            continue;
        if (a[i] >= lo && a[i] < hi)
            count += 1;
    }
    return count;
}
